"""Experiment configuration: YAML parsing, defaults, validation and sweep expansion.

Angles are written in degrees in the files and converted to radians when the
scenario is built. Defaults:

========================  ==========================
carrier_hz                28e9
subcarrier_spacing_hz     240e3
subcarrier_count          1
power_w                   1.0
noise_figure_db           3.0
temperature_k             290.0
element spacing           half a wavelength
planes                    BS xz, RIS yz, MS xy
========================  ==========================
"""
from __future__ import annotations

import copy
import hashlib
import itertools
import math
from dataclasses import dataclass

import numpy as np
import yaml

from ..bounds import CHANNEL_LABELS, STATE_LABELS
from ..geometry import StationPose, planar_layout, spherical_to_cartesian
from ..phase_design import STRATEGIES
from ..scenario import (
    DEFAULT_CARRIER_HZ,
    DEFAULT_NOISE_FIGURE_DB,
    DEFAULT_POWER_W,
    DEFAULT_SUBCARRIER_SPACING_HZ,
    DEFAULT_TEMPERATURE_K,
    AsyncOffsets,
    Scenario,
    SignalConfig,
    Station,
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_STATION_DEFAULTS = {
    "bs": {"centroid": [0.0, 0.0, 0.0], "orientation_deg": [0.0, 0.0, 0.0], "elements": 36,
           "plane": "xz"},
    "ris": {"centroid": [10.0, 10.0, -1.0], "orientation_deg": [0.0, 0.0, 0.0], "elements": 100,
            "plane": "yz", "enabled": True},
    "ms": {"centroid": [4.0, 4.0, -3.0], "orientation_deg": [30.0, 30.0, 30.0], "elements": 4,
           "plane": "xy", "link": None},
}

_DEFAULTS = {
    "name": "experiment",
    "seed": 0,
    "threads": 0,
    "stations": _STATION_DEFAULTS,
    "signal": {"carrier_hz": DEFAULT_CARRIER_HZ, "subcarrier_count": 1,
               "subcarrier_spacing_hz": DEFAULT_SUBCARRIER_SPACING_HZ, "power_w": DEFAULT_POWER_W,
               "synchronous": True, "element_spacing_m": None, "sync_residual_s": 0.0,
               "async_offsets_rad": [0.0, 0.0]},
    "noise": {"noise_figure_db": DEFAULT_NOISE_FIGURE_DB, "temperature_k": DEFAULT_TEMPERATURE_K,
              "sigma2": None},
    "phase": {"strategy": "proposed", "seed": None, "levels": 4, "objective": "peb",
              "max_evaluations": None},
    "bounds": {"mode": "auto", "known": [], "discard": [], "partial": True},
    "sweep": {"axes": []},
    "mle": {"trials": 200, "grid_points": 3, "box_sigma": 6.0, "offset_sigma": 0.7,
            "refinement": "local_descent", "max_refine_iters": 20, "snapshots": 1},
}

_LINK_KEYS = {"distance", "elevation_deg", "azimuth_deg"}
_AXIS_KEYS = {"path", "values", "start", "stop", "step"}


def _merge(defaults, given, where):
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where or 'config'}")
    out = {}
    for key, default in defaults.items():
        value = given.get(key, default)
        if isinstance(default, dict) and key != "link":
            out[key] = _merge(default, given.get(key), f"{where}.{key}" if where else key)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _plain(value):
    """Convert numpy scalars and tuples so the YAML dump stays portable."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _vector(value, where, length=3):
    try:
        vec = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a list of {length} numbers") from None
    if len(vec) != length or not all(math.isfinite(v) for v in vec):
        raise ConfigError(f"{where} must be a list of {length} finite numbers")
    return vec


def _axis_values(axis, where):
    if not isinstance(axis, dict) or "path" not in axis:
        raise ConfigError(f"{where} needs a 'path'")
    unknown = set(axis) - _AXIS_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    if "values" in axis:
        values = list(axis["values"]) if isinstance(axis["values"], (list, tuple)) else None
        if not values:
            raise ConfigError(f"{where} has an empty value list")
        return values
    try:
        start, stop, step = float(axis["start"]), float(axis["stop"]), float(axis["step"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"{where} needs 'values' or numeric 'start', 'stop', 'step'") from None
    if step <= 0 or not math.isfinite(step):
        raise ConfigError(f"{where} step must be positive")
    if stop < start:
        raise ConfigError(f"{where} range is empty (stop < start)")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def get_path(tree, path: str):
    node = tree
    for part in path.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise ConfigError(f"sweep path {path!r} does not exist")
    return node


def set_path(tree, path: str, value):
    parts = path.split(".")
    node = tree
    for part in parts[:-1]:
        node = node[int(part)] if isinstance(node, list) else node.get(part)
        if node is None:
            raise ConfigError(f"sweep path {path!r} does not exist")
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    elif isinstance(node, dict) and last in node:
        node[last] = value
    else:
        raise ConfigError(f"sweep path {path!r} does not exist")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Normalised experiment configuration (a nested dict with every default filled)."""

    data: dict

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def axes(self) -> list[tuple[str, list]]:
        return [(axis["path"], _axis_values(axis, f"sweep.axes[{i}]"))
                for i, axis in enumerate(self.data["sweep"]["axes"])]

    def points(self):
        """Sweep points in row-major order as lists of ``(path, value)``."""
        axes = self.axes
        if not axes:
            return [[]]
        paths = [p for p, _ in axes]
        return [list(zip(paths, combo)) for combo in itertools.product(*(v for _, v in axes))]

    def at(self, point) -> dict:
        tree = copy.deepcopy(self.data)
        for path, value in point:
            set_path(tree, path, value)
        return tree

    def to_yaml(self) -> str:
        return yaml.safe_dump(_plain(self.data), sort_keys=True, default_flow_style=None)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_yaml().encode()).hexdigest()

    def with_overrides(self, **top_level) -> "ScenarioConfig":
        data = copy.deepcopy(self.data)
        for key, value in top_level.items():
            if value is not None:
                data[key] = value
        return parse_config(data)


def parse_config(source) -> ScenarioConfig:
    """Parse YAML text (or an already loaded mapping), fill defaults and validate."""
    if isinstance(source, str):
        try:
            raw = yaml.safe_load(source)
        except yaml.YAMLError as exc:
            raise ConfigError(f"YAML syntax error: {exc}") from None
    else:
        raw = source
    if raw is None:
        raw = {}
    data = _merge(_DEFAULTS, raw, "")
    cfg = ScenarioConfig(data)
    validate_config(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate_config(cfg: ScenarioConfig) -> None:
    """Check types, option values and sweep ranges, then build every sweep point."""
    data = cfg.data
    if data["phase"]["strategy"] not in STRATEGIES:
        raise ConfigError(f"phase.strategy must be one of {list(STRATEGIES)}")
    if data["phase"]["objective"] not in ("peb", "oeb"):
        raise ConfigError("phase.objective must be 'peb' or 'oeb'")
    if data["bounds"]["mode"] not in ("auto", "direct", "two_stage"):
        raise ConfigError("bounds.mode must be 'auto', 'direct' or 'two_stage'")
    for key, allowed in (("known", STATE_LABELS), ("discard", CHANNEL_LABELS)):
        bad = set(data["bounds"][key] or []) - set(allowed)
        if bad:
            raise ConfigError(f"bounds.{key} has unknown labels {sorted(bad)}")
    if data["bounds"]["known"] and data["bounds"]["discard"]:
        raise ConfigError("bounds.known and bounds.discard cannot be combined")
    if data["mle"]["refinement"] not in ("none", "local_descent"):
        raise ConfigError("mle.refinement must be 'none' or 'local_descent'")
    if not isinstance(data["sweep"]["axes"], list):
        raise ConfigError("sweep.axes must be a list")
    for path, _ in cfg.axes:
        get_path(data, path)
    try:
        seed = int(data["seed"])
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer") from None
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    if int(data["threads"]) < 0:
        raise ConfigError("threads must be non-negative (0 = all cores)")
    for point in cfg.points():
        build_scenario(cfg.at(point))


def _station(spec, name, spacing, reference=None):
    elements = int(spec["elements"])
    layout = planar_layout(elements, spacing, spec["plane"])
    orientation = np.radians(_vector(spec["orientation_deg"], f"stations.{name}.orientation_deg"))
    link = spec.get("link")
    if link:
        if not isinstance(link, dict) or set(link) != _LINK_KEYS:
            raise ConfigError(f"stations.{name}.link needs exactly {sorted(_LINK_KEYS)}")
        offset = spherical_to_cartesian(float(link["distance"]), np.radians(float(link["elevation_deg"])),
                                        np.radians(float(link["azimuth_deg"])))
        centroid = np.asarray(reference) + offset
    else:
        centroid = _vector(spec["centroid"], f"stations.{name}.centroid")
    return Station(StationPose(centroid, orientation), layout)


def build_scenario(tree: dict) -> Scenario:
    """Turn one (swept) configuration tree into a :class:`Scenario`."""
    try:
        sig = tree["signal"]
        carrier = float(sig["carrier_hz"])
        if carrier <= 0:
            raise ConfigError("signal.carrier_hz must be positive")
        spacing = sig["element_spacing_m"]
        spacing = 299_792_458.0 / carrier / 2 if spacing is None else float(spacing)
        signal = SignalConfig(power=float(sig["power_w"]), carrier_hz=carrier,
                              subcarrier_count=int(sig["subcarrier_count"]),
                              subcarrier_spacing_hz=float(sig["subcarrier_spacing_hz"]),
                              sync_residual_s=float(sig["sync_residual_s"]))
        st = tree["stations"]
        bs = _station(st["bs"], "bs", spacing)
        ms = _station(st["ms"], "ms", spacing, reference=bs.pose.centroid)
        ris = None
        if st["ris"]["enabled"] and int(st["ris"]["elements"]) > 0:
            ris = _station(st["ris"], "ris", spacing)
        offsets = _vector(sig["async_offsets_rad"], "signal.async_offsets_rad", 2)
        noise = tree["noise"]
        sigma2 = None if noise["sigma2"] is None else float(noise["sigma2"])
        if sigma2 is not None and sigma2 <= 0:
            raise ConfigError("noise.sigma2 must be positive")
        return Scenario(bs=bs, ms=ms, ris=ris, signal=signal, synchronous=bool(sig["synchronous"]),
                        offsets=AsyncOffsets(*offsets),
                        noise_figure_db=float(noise["noise_figure_db"]),
                        temperature_k=float(noise["temperature_k"]), sigma2=sigma2)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
