"""Sweep execution and output writing."""
from __future__ import annotations

import copy
import csv
import io
import json
import os
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..bounds import CHANNEL_LABELS, STATE_LABELS, assemble_fim, channel_labels, crlb
from ..estimation import MleConfig, monte_carlo
from ..phase_design import build_profile
from .config import ScenarioConfig, build_scenario, parse_config

RESULT_COLUMNS = (["strategy", "peb_m", "oeb_deg", "gdop_position", "gdop_orientation",
                   "condition_number"]
                  + [f"sigma_{l}" for l in STATE_LABELS + CHANNEL_LABELS[:-3]]
                  + ["note", "error"])


@dataclass
class RunResult:
    columns: list
    rows: list
    warnings: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    elapsed_s: float = 0.0

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_value(row.get(c, "")) for c in self.columns])
        return buf.getvalue()

    @property
    def failed(self) -> int:
        return sum(1 for r in self.rows if r.get("error"))


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "%.8e" % value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def _profile_for(tree, scenario):
    if scenario.ris is None:
        return None, "none"
    ph = tree["phase"]
    seed = tree["seed"] if ph["seed"] is None else ph["seed"]
    profile = build_profile(ph["strategy"], scenario, seed=int(seed), levels=int(ph["levels"]),
                            objective=ph["objective"], mode=tree["bounds"]["mode"],
                            max_evaluations=ph["max_evaluations"])
    return profile, ph["strategy"]


def _mask_for(tree, scenario, fim):
    known, discard = tree["bounds"]["known"], tree["bounds"]["discard"]
    if known:
        return [label not in known for label in STATE_LABELS]
    if discard:
        if fim.channel is None:
            raise ValueError("bounds.discard needs the two-stage mode")
        return [label not in discard for label in channel_labels(scenario)]
    return None


def evaluate_point(tree: dict) -> dict:
    """Bounds for one configuration tree; failures become an ``error`` entry."""
    row = {c: np.nan for c in RESULT_COLUMNS}
    row.update(strategy=tree["phase"]["strategy"], note="", error="")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scenario = build_scenario(tree)
            profile, strategy = _profile_for(tree, scenario)
            fim = assemble_fim(scenario, profile, tree["bounds"]["mode"])
            report = crlb(fim, _mask_for(tree, scenario, fim), partial=bool(tree["bounds"]["partial"]))
        row.update(strategy=strategy, peb_m=report.peb, oeb_deg=report.oeb_deg,
                   gdop_position=report.gdop_position, gdop_orientation=report.gdop_orientation,
                   condition_number=report.condition_number)
        for label, value in report.per_parameter_sigmas.items():
            if f"sigma_{label}" in row:
                row[f"sigma_{label}"] = value
        notes = list(report.warnings) + [str(w.message) for w in caught]
        row["note"] = "; ".join(dict.fromkeys(notes))
    except Exception as exc:  # noqa: BLE001 - recorded per point
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def _threads(cfg: ScenarioConfig, threads):
    n = cfg.data["threads"] if threads is None else threads
    return max(1, int(n) or (os.cpu_count() or 1))


def run_sweep(cfg: ScenarioConfig, threads: int | None = None) -> RunResult:
    """Evaluate every sweep point; rows keep the sweep order whatever the thread count."""
    start = time.perf_counter()
    points = cfg.points()
    trees = [cfg.at(p) for p in points]
    workers = _threads(cfg, threads)
    if workers > 1 and len(trees) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(evaluate_point, trees))
    else:
        results = [evaluate_point(t) for t in trees]
    paths = [p for p, _ in cfg.axes]
    rows = []
    for point, res in zip(points, results):
        row = dict(point)
        row.update(res)
        rows.append(row)
    notes = sorted({r["note"] for r in rows if r["note"]})
    return RunResult(paths + RESULT_COLUMNS, rows, notes, {"points": len(rows)},
                     time.perf_counter() - start)


def compare_strategies(cfg: ScenarioConfig, strategies, threads: int | None = None) -> RunResult:
    """Run the sweep once per strategy; the strategy is the innermost sweep axis."""
    strategies = list(strategies)
    if not strategies:
        raise ValueError("at least one strategy is required")
    data = copy.deepcopy(cfg.data)
    data["sweep"]["axes"] = [a for a in data["sweep"]["axes"] if a["path"] != "phase.strategy"]
    if len(strategies) == 1:
        data["phase"]["strategy"] = strategies[0]
    else:
        data["sweep"]["axes"].append({"path": "phase.strategy", "values": strategies})
    result = run_sweep(parse_config(data), threads)
    if "phase.strategy" in result.columns:
        result.columns.remove("phase.strategy")
    return result


MLE_COLUMNS = (["trial"] + [f"est_{l}" for l in STATE_LABELS]
               + ["position_error_m", "orientation_error_deg"])


def run_mle(cfg: ScenarioConfig, trials: int | None = None, seed: int | None = None) -> RunResult:
    """Monte Carlo MLE at the first sweep point, compared with its PEB."""
    start = time.perf_counter()
    tree = cfg.at(cfg.points()[0])
    opts = tree["mle"]
    trials = int(opts["trials"] if trials is None else trials)
    if trials < 1:
        raise ValueError("trials must be positive")
    seed = int(tree["seed"] if seed is None else seed)
    scenario = build_scenario(tree)
    profile, _ = _profile_for(tree, scenario)
    report = crlb(assemble_fim(scenario, profile, "direct"))
    sd = np.array([report.per_parameter_sigmas[l] for l in STATE_LABELS])
    truth = scenario.ms_state
    mle_cfg = MleConfig.around(truth + float(opts["offset_sigma"]) * sd, float(opts["box_sigma"]) * sd,
                               coarse_grid_points=int(opts["grid_points"]),
                               refinement=opts["refinement"],
                               max_refine_iters=int(opts["max_refine_iters"]),
                               snapshots=int(opts["snapshots"]))
    estimates = monte_carlo(scenario, profile, mle_cfg, trials, seed=seed)
    err = estimates - truth
    pos_err = np.linalg.norm(err[:, :3], axis=1)
    ori_err = np.degrees(np.linalg.norm(err[:, 3:], axis=1))
    rows = []
    for k in range(trials):
        row = {"trial": k, "position_error_m": pos_err[k], "orientation_error_deg": ori_err[k]}
        row.update({f"est_{l}": estimates[k, i] for i, l in enumerate(STATE_LABELS)})
        rows.append(row)
    rmse = float(np.sqrt(np.mean(pos_err**2)))
    summary = {"trials": trials, "peb_m": report.peb / np.sqrt(mle_cfg.snapshots),
               "oeb_deg": report.oeb_deg / np.sqrt(mle_cfg.snapshots), "rmse_position_m": rmse}
    summary["rmse_over_peb"] = rmse / summary["peb_m"]
    return RunResult(list(MLE_COLUMNS), rows, [], summary, time.perf_counter() - start)


def write_outputs(result: RunResult, out_dir, cfg: ScenarioConfig, command: str, **extra) -> dict:
    """Write ``results.csv`` and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result.csv_text(), encoding="utf-8")
    manifest = {
        "command": command,
        "config_name": cfg.name,
        "config_sha256": cfg.sha256(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "rows": len(result.rows),
        "failed_rows": result.failed,
        "wall_clock_s": round(result.elapsed_s, 6),
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "warnings": result.warnings,
        "columns": result.columns,
        **{k: (float(v) if isinstance(v, (np.floating, float)) else v)
           for k, v in result.summary.items()},
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest
