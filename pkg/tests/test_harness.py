import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risloc.harness.cli import main
from risloc.harness.config import ConfigError, get_path, parse_config
from risloc.harness.runner import compare_strategies, run_sweep

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
name: small
stations:
  bs: {elements: 4}
  ris: {centroid: [3, 3, -1], elements: 4}
  ms: {centroid: [4, 1, -2], elements: 4}
signal: {subcarrier_count: 2}
sweep:
  axes:
    - {path: stations.ms.centroid.0, start: 2, stop: 4, step: 1}
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return path


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = parse_config(path.read_text())
    again = parse_config(cfg.to_yaml())
    assert again.data == cfg.data
    assert again.sha256() == cfg.sha256()


@given(st.floats(1.0, 30.0), st.integers(1, 64), st.sampled_from(["mirror", "random", "proposed"]),
       st.integers(0, 2**64 - 1))
def test_round_trip_preserves_values(distance, count, strategy, seed):
    cfg = parse_config({"seed": seed, "stations": {"ms": {"centroid": [distance, 1.0, -2.0]}},
                        "signal": {"subcarrier_count": count}, "phase": {"strategy": strategy}})
    again = parse_config(cfg.to_yaml())
    assert again.data == cfg.data
    assert get_path(again.data, "stations.ms.centroid.0") == distance


def test_sweep_expansion_is_row_major():
    cfg = parse_config({"sweep": {"axes": [{"path": "stations.ms.centroid.0", "values": [1, 2]},
                                           {"path": "stations.ms.centroid.1", "start": 0,
                                            "stop": 1, "step": 0.5}]}})
    points = [[v for _, v in p] for p in cfg.points()]
    assert points == [[1, 0.0], [1, 0.5], [1, 1.0], [2, 0.0], [2, 0.5], [2, 1.0]]


@pytest.mark.parametrize("raw, fragment", [
    ({"sweep": {"axes": [{"path": "stations.ms.centroid.0", "start": 3, "stop": 1, "step": 1}]}},
     "empty"),
    ({"sweep": {"axes": [{"path": "stations.ms.centroid.0", "values": []}]}}, "empty"),
    ({"sweep": {"axes": [{"path": "stations.ms.nothing", "values": [1]}]}}, "does not exist"),
    ({"stations": {"bs": {"elements": 5}}}, "perfect-square"),
    ({"phase": {"strategy": "best"}}, "strategy"),
    ({"bounds": {"discard": ["tau_XY"]}}, "unknown labels"),
    ({"colour": "blue"}, "unknown key"),
    ({"seed": -1}, "unsigned"),
])
def test_invalid_configs_rejected(raw, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(raw)


def test_yaml_syntax_error():
    with pytest.raises(ConfigError, match="YAML"):
        parse_config("stations: [unclosed")


def test_run_sweep_order_independent_of_threads():
    cfg = parse_config(SMALL)
    one, many = run_sweep(cfg, threads=1), run_sweep(cfg, threads=4)
    assert one.csv_text() == many.csv_text()
    assert [r["stations.ms.centroid.0"] for r in one.rows] == [2.0, 3.0, 4.0]


def test_point_errors_become_rows():
    cfg = parse_config({"stations": {"ms": {"elements": 1}}, "bounds": {"partial": False},
                        "signal": {"subcarrier_count": 2}})
    result = run_sweep(cfg, threads=1)
    assert result.failed == 1
    assert "UnidentifiableError" in result.rows[0]["error"]
    assert np.isnan(result.rows[0]["peb_m"])


def test_compare_adds_strategy_rows():
    result = compare_strategies(parse_config(SMALL), ["mirror", "proposed"], threads=1)
    assert [r["strategy"] for r in result.rows] == ["mirror", "proposed"] * 3
    assert "phase.strategy" not in result.columns


def test_cli_run_writes_outputs(small_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(small_config), "--out", str(out), "--threads", "2"]) == 0
    status = json.loads(capsys.readouterr().out)
    assert status["status"] == "ok" and status["rows"] == 3
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0].startswith("stations.ms.centroid.0,strategy,peb_m,oeb_deg")
    assert len(lines) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["rows"] == 3 and manifest["failed_rows"] == 0
    assert len(manifest["config_sha256"]) == 64


def test_cli_output_is_byte_identical(small_config, tmp_path):
    for name, threads in (("a", "1"), ("b", "3")):
        assert main(["run", str(small_config), "--out", str(tmp_path / name),
                     "--threads", threads, "--seed", "5"]) == 0
    assert (tmp_path / "a/results.csv").read_bytes() == (tmp_path / "b/results.csv").read_bytes()


def test_cli_compare_and_validate(small_config, tmp_path, capsys):
    assert main(["validate", str(small_config)]) == 0
    assert json.loads(capsys.readouterr().out)["points"] == 3
    assert main(["compare", str(small_config), "--strategies=mirror,random",
                 "--out", str(tmp_path / "c")]) == 0
    assert len((tmp_path / "c/results.csv").read_text().splitlines()) == 7


def test_cli_mle(tmp_path, capsys):
    cfg = tmp_path / "mle.yaml"
    cfg.write_text((CONFIG_DIR / "mle_small.yaml").read_text())
    assert main(["mle", str(cfg), "--trials=2", "--out", str(tmp_path / "m")]) == 0
    manifest = json.loads((tmp_path / "m/manifest.json").read_text())
    assert manifest["trials"] == 2 and manifest["rmse_over_peb"] > 0


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("phase: {strategy: nope}\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == "error" and err["kind"] == "config"
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 2


def test_cli_rejects_bad_seed(small_config):
    with pytest.raises(SystemExit) as exc:
        main(["run", str(small_config), "--seed", "-3"])
    assert exc.value.code != 0
