"""RIS phase profiles: mirror, random, closed-form SNR design, CRLB search, quantisation."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from .bounds import PhaseLinearizedFim, UnidentifiableError, crlb
from .geometry import SPEED_OF_LIGHT
from .scenario import Scenario
from .signal_model import Propagation

STRATEGIES = ("mirror", "random", "proposed", "optimized_crlb", "quantized")
TWO_PI = 2 * np.pi


@dataclass(frozen=True, eq=False)
class PhaseProfile:
    """RIS phases in ``[0, 2*pi)`` together with the strategy that produced them."""

    strategy: str
    phases: np.ndarray
    seed: int | None = None
    quantization_levels: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        phases = np.mod(np.asarray(self.phases, dtype=float).reshape(-1), TWO_PI)
        # mod can round up to exactly 2*pi for tiny negative inputs
        phases[phases >= TWO_PI] = 0.0
        object.__setattr__(self, "phases", phases)

    @property
    def element_count(self) -> int:
        return self.phases.size

    @property
    def reflection(self) -> np.ndarray:
        """Diagonal of the RIS reflection matrix."""
        return np.exp(1j * self.phases)


def _ris_count(target) -> int:
    if isinstance(target, Scenario):
        if target.ris is None:
            raise ValueError("scenario has no RIS")
        return target.ris.element_count
    return int(target)


def mirror(target) -> PhaseProfile:
    """All-zero phases; ``target`` is a scenario or an element count."""
    return PhaseProfile("mirror", np.zeros(_ris_count(target)))


def random_profile(target, seed: int | None = None) -> PhaseProfile:
    """I.i.d. phases uniform on ``[0, 2*pi)``, reproducible for a given seed."""
    rng = np.random.default_rng(seed)
    return PhaseProfile("random", rng.uniform(0.0, TWO_PI, _ris_count(target)), seed=seed)


def design_delays(scenario: Scenario):
    """Element propagation delays ``(tau_br, tau_rm, tau_bm)`` in seconds.

    Shapes ``(N_B, N_R)``, ``(N_R, N_M)`` and ``(N_B, N_M)``.
    """
    if scenario.ris is None:
        raise ValueError("scenario has no RIS")
    prop = Propagation(scenario, subcarriers=[0], synchronous=True)
    return prop.d_br / SPEED_OF_LIGHT, prop.d_rm / SPEED_OF_LIGHT, prop.d_bm / SPEED_OF_LIGHT


def _cascade_delays(scenario):
    """``tau_br + tau_rm`` per (b, r, m) plus ``tau_bm``."""
    tau_br, tau_rm, tau_bm = design_delays(scenario)
    return tau_br[:, :, None] + tau_rm[None, :, :], tau_bm


def alignment_phases(scenario: Scenario) -> np.ndarray:
    """Minimiser of the convexified objective with zero-mean phases (not wrapped)."""
    cascade, _ = _cascade_delays(scenario)
    per_element = cascade.mean(axis=(0, 2))
    return TWO_PI * scenario.signal.carrier_hz * (per_element - per_element.mean())


def common_phase(scenario: Scenario) -> float:
    """Constant shift aligning the reflected path with the direct path (not wrapped)."""
    cascade, tau_bm = _cascade_delays(scenario)
    return TWO_PI * scenario.signal.carrier_hz * (cascade.mean() - tau_bm.mean())


def proposed_profile(scenario: Scenario) -> PhaseProfile:
    """Closed-form SNR-oriented design at the carrier frequency.

    ``theta_k = 2*pi*f0 * mean_{b,m}(tau_bk + tau_km - tau_bm)``: the alignment
    phases plus the common shift, reduced modulo ``2*pi``.
    """
    tau_br, tau_rm, tau_bm = design_delays(scenario)
    f0 = scenario.signal.carrier_hz
    total = tau_br[:, :, None] + tau_rm[None, :, :] - tau_bm[:, None, :]
    return PhaseProfile("proposed", TWO_PI * f0 * total.mean(axis=(0, 2)))


def cascade_offsets(scenario: Scenario) -> np.ndarray:
    """``C_brm = beta_m - 2*pi*f0*(tau_br + tau_rm)``, shape ``(N_B, N_R, N_M)``."""
    cascade, _ = _cascade_delays(scenario)
    beta = scenario.signal.beam_phases
    beta = np.zeros(scenario.ms.element_count) if beta is None else np.asarray(beta, float)
    return beta[None, None, :] - TWO_PI * scenario.signal.carrier_hz * cascade


def convexified_objective(scenario_or_offsets, phases) -> float:
    """Sum of squared deviations of ``theta_r + C_brm`` from their centroid.

    Phases are used as real numbers, without wrapping.
    """
    offsets = scenario_or_offsets
    if isinstance(offsets, Scenario):
        offsets = cascade_offsets(offsets)
    total = np.asarray(getattr(phases, "phases", phases), float)[None, :, None] + offsets
    return float(((total - total.mean()) ** 2).sum())


def snr_terms(scenario: Scenario, profile) -> dict:
    """Sum-over-antennas SNR at the carrier: total, direct link and RIS path.

    Returns a dict with keys ``total``, ``direct`` and ``ris``. Per antenna
    ``total`` reaches ``(sqrt(direct) + sqrt(ris))**2`` only when both paths
    arrive in phase.
    """
    sig = replace(scenario.signal, subcarrier_count=1, data_symbols=None)
    prop = Propagation(scenario.replace(signal=sig), profile, synchronous=True)
    sigma2 = scenario.noise_variance
    direct, ris = prop.direct_part()[0], prop.ris_part()[0]
    return {"total": float(np.sum(np.abs(direct + ris) ** 2) / sigma2),
            "direct": float(np.sum(np.abs(direct) ** 2) / sigma2),
            "ris": float(np.sum(np.abs(ris) ** 2) / sigma2)}


def _make_objective(lin: PhaseLinearizedFim, objective: str):
    attr = {"peb": "peb", "oeb": "oeb"}.get(objective)
    if attr is None:
        raise ValueError(f"objective must be 'peb' or 'oeb', got {objective!r}")
    counter = {"n": 0}

    def fun(theta):
        counter["n"] += 1
        try:
            value = getattr(crlb(lin.fim(theta)), attr)
        except (UnidentifiableError, np.linalg.LinAlgError, FloatingPointError):
            return np.inf
        return value if np.isfinite(value) else np.inf

    return fun, counter


def _simplex(start, step):
    n = start.size
    simplex = np.tile(start, (n + 1, 1))
    simplex[1:] += step * np.eye(n)
    return simplex


def optimize_crlb(scenario: Scenario, objective: str = "peb", init: PhaseProfile | None = None, *,
                  mode: str = "auto", max_evaluations: int | None = None, restarts: int = 1,
                  seed: int = 0, step: float = 0.5) -> PhaseProfile:
    """Minimise the PEB or OEB over the RIS phases with a Nelder-Mead search.

    The search starts from ``init`` (the proposed design by default) and is
    capped at ``500 * N_R`` objective evaluations per run. When a run improves
    by less than ``1e-6`` relative, up to ``restarts`` further runs start from
    seeded random profiles. The best profile seen is returned, so the result
    is never worse than the initialisation.
    """
    n_ris = _ris_count(scenario)
    init = proposed_profile(scenario) if init is None else init
    lin = PhaseLinearizedFim(scenario, mode)
    fun, _ = _make_objective(lin, objective)
    cap = 500 * n_ris if max_evaluations is None else int(max_evaluations)

    best_x, best_f = init.phases.copy(), fun(init.phases)
    start = best_x
    rng = np.random.default_rng(seed)
    for attempt in range(restarts + 1):
        before = fun(start)
        res = optimize.minimize(fun, start, method="Nelder-Mead",
                                options={"maxfev": cap, "initial_simplex": _simplex(start, step),
                                         "xatol": 1e-8, "fatol": 0.0})
        if res.fun < best_f:
            best_x, best_f = res.x.copy(), float(res.fun)
        improved = np.isfinite(before) and before - res.fun > 1e-6 * abs(before)
        if improved or attempt == restarts:
            break
        start = rng.uniform(0.0, TWO_PI, n_ris)
    return PhaseProfile("optimized_crlb", best_x, seed=seed)


def quantize(profile: PhaseProfile, levels: int) -> PhaseProfile:
    """Snap each phase to the nearest point of ``{2*pi*k/levels}``; ties go to the lower ``k``."""
    if int(levels) != levels or levels < 2:
        raise ValueError("quantization needs an integer number of levels >= 2")
    levels = int(levels)
    scaled = profile.phases * levels / TWO_PI
    k = np.floor(scaled)
    frac = scaled - k
    k = np.where(frac > 0.5, k + 1, k) % levels
    return PhaseProfile("quantized", TWO_PI * k / levels, seed=profile.seed,
                        quantization_levels=levels)


def build_profile(strategy: str, scenario: Scenario, *, seed: int | None = None,
                  levels: int = 4, objective: str = "peb", mode: str = "auto",
                  max_evaluations: int | None = None) -> PhaseProfile:
    """Construct a profile by strategy name (``quantized`` quantises the CRLB-optimised one)."""
    if strategy == "mirror":
        return mirror(scenario)
    if strategy == "random":
        return random_profile(scenario, seed)
    if strategy == "proposed":
        return proposed_profile(scenario)
    if strategy in ("optimized_crlb", "quantized"):
        opt = optimize_crlb(scenario, objective, mode=mode, max_evaluations=max_evaluations,
                            seed=0 if seed is None else seed)
        return opt if strategy == "optimized_crlb" else quantize(opt, levels)
    raise ValueError(f"unknown strategy {strategy!r}")
