"""Maximum-likelihood estimation of the MS position and orientation."""
from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .bounds import mean_derivatives_direct
from .scenario import Scenario
from .signal_model import add_noise, response

TWO_PI = 2 * np.pi
REFINE_EVALS_PER_ITER = 5  # residual evaluations allowed per refinement iteration


class BoundaryHitWarning(UserWarning):
    """The likelihood maximum lies on the edge of the search box."""


@dataclass(frozen=True, eq=False)
class MleConfig:
    """Search settings.

    ``search_box`` has shape ``(6, 2)`` with ``[min, max]`` rows for
    ``(x, y, z, alpha, beta, gamma)``; a row with ``min == max`` pins that
    coordinate. Orientation rows spanning a full turn are treated as periodic.
    """

    search_box: np.ndarray
    coarse_grid_points: int | tuple = 5
    refinement: str = "local_descent"
    max_refine_iters: int = 20
    snapshots: int = 1
    workers: int = 1

    def __post_init__(self):
        box = np.asarray(self.search_box, dtype=float)
        if box.shape != (6, 2) or np.any(box[:, 1] < box[:, 0]) or not np.all(np.isfinite(box)):
            raise ValueError("search_box must be a finite (6, 2) array of [min, max] rows")
        object.__setattr__(self, "search_box", box)
        points = np.broadcast_to(np.asarray(self.coarse_grid_points, dtype=int), (6,)).copy()
        if np.any(points < 2):
            raise ValueError("coarse_grid_points must be at least 2 per dimension")
        object.__setattr__(self, "coarse_grid_points", tuple(int(p) for p in points))
        if self.refinement not in ("none", "local_descent"):
            raise ValueError("refinement must be 'none' or 'local_descent'")
        if self.snapshots < 1 or self.max_refine_iters < 0 or self.workers < 1:
            raise ValueError("snapshots and workers must be positive, max_refine_iters non-negative")

    @classmethod
    def around(cls, state, half_widths, **kwargs) -> "MleConfig":
        """Box centred on ``state`` with the given half widths."""
        state = np.asarray(state, float)
        half = np.broadcast_to(np.asarray(half_widths, float), (6,))
        return cls(np.stack([state - half, state + half], axis=1), **kwargs)

    @property
    def periodic(self) -> np.ndarray:
        span = self.search_box[:, 1] - self.search_box[:, 0]
        return np.r_[False, False, False, span[3:] >= TWO_PI - 1e-12]

    def grid_axes(self) -> list[np.ndarray]:
        axes = []
        for (lo, hi), count, periodic in zip(self.search_box, self.coarse_grid_points, self.periodic):
            if lo == hi:
                axes.append(np.array([lo]))
            elif periodic:
                axes.append(lo + TWO_PI * np.arange(count) / count)
            else:
                axes.append(np.linspace(lo, hi, count))
        return axes


@dataclass(frozen=True, eq=False)
class MleResult:
    state: np.ndarray
    log_likelihood: float
    evaluations: int
    grid_state: np.ndarray
    grid_log_likelihood: float
    boundary_hit: bool = False
    warnings: tuple = field(default=())


def _as_snapshots(snapshot, n_sub: int, n_bs: int) -> np.ndarray:
    y = np.asarray(snapshot, dtype=complex)
    if y.ndim == 1:
        y = y[None, None, :]
    elif y.ndim == 2:
        y = y[None]
    if y.shape[1:] != (n_sub, n_bs):
        raise ValueError(f"snapshot shape {y.shape} does not match ({n_sub}, {n_bs}) per snapshot")
    return y


def log_likelihood(snapshot, candidate_state, scenario: Scenario, phase_profile=None,
                   n=None) -> float:
    """Gaussian log-likelihood of ``snapshot`` for the MS state ``candidate_state``.

    ``snapshot`` is ``(N_B,)`` for a single subcarrier ``n``, or ``(N, N_B)`` /
    ``(S, N, N_B)`` covering all subcarriers (and ``S`` independent snapshots),
    over which the log-likelihood is summed.
    """
    sigma2 = scenario.noise_variance
    cand = scenario.with_ms_state(candidate_state)
    mu = response(cand, phase_profile, None if n is None else [n]).mu
    y = _as_snapshots(snapshot, mu.shape[0], mu.shape[1])
    resid = np.abs(y - mu[None]) ** 2
    count = y.shape[0] * y.shape[1]
    return float(-resid.sum() / sigma2 - count * mu.shape[1] * np.log(np.pi * sigma2))


def _project(state, periodic, box, clip=True):
    """Wrap periodic coordinates and, with ``clip``, clip the others to the box."""
    state = np.asarray(state, dtype=float)
    out = np.clip(state, box[:, 0], box[:, 1]) if clip else state.copy()
    lo = box[:, 0]
    out[periodic] = lo[periodic] + np.mod(state[periodic] - lo[periodic], TWO_PI)
    return out


def _residual_functions(snapshots, scenario, phase_profile):
    """Whitened real residual ``[Re, Im](y - mu(s)) / sigma`` and its Jacobian."""
    sigma = np.sqrt(scenario.noise_variance)
    probe = response(scenario, phase_profile).mu
    y = _as_snapshots(snapshots, *probe.shape)

    def residual(state):
        r = (y - response(scenario.with_ms_state(state), phase_profile).mu[None]) / sigma
        return np.concatenate([r.real.ravel(), r.imag.ravel()])

    def jacobian(state):
        d = mean_derivatives_direct(scenario.with_ms_state(state), phase_profile) / sigma
        d = np.broadcast_to(d[None], (y.shape[0],) + d.shape).reshape(-1, 6)
        return -np.concatenate([d.real, d.imag])

    return residual, jacobian


def mle_estimate(snapshots, scenario: Scenario, phase_profile, config: MleConfig) -> MleResult:
    """Grid search followed, optionally, by Levenberg-Marquardt refinement.

    The log-likelihood is a whitened nonlinear least-squares cost, so the
    refinement runs :func:`scipy.optimize.least_squares` from the best grid
    point with the analytic Jacobian of the mean. Pinned coordinates stay
    fixed. The refinement is not confined to the box; a result outside it is
    clipped back (periodic orientation rows wrap instead) and flagged as a
    boundary hit.
    """
    box, periodic = config.search_box, config.periodic
    free = box[:, 1] > box[:, 0]
    evals = 0

    def ll(state):
        nonlocal evals
        evals += 1
        return log_likelihood(snapshots, state, scenario, phase_profile)

    grid = list(itertools.product(*config.grid_axes()))
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            values = np.array(list(pool.map(lambda s: log_likelihood(snapshots, s, scenario,
                                                                     phase_profile), grid)))
        evals += len(grid)
    else:
        values = np.array([ll(s) for s in grid])
    values = np.where(np.isfinite(values), values, -np.inf)
    best = int(np.argmax(values))  # first maximum: lexicographically smallest grid point
    grid_state, grid_ll = np.array(grid[best], float), float(values[best])
    state, best_ll = grid_state.copy(), grid_ll

    if config.refinement == "local_descent" and free.any() and config.max_refine_iters > 0:
        residual, jacobian = _residual_functions(snapshots, scenario, phase_profile)

        def embed(x):
            full = grid_state.copy()
            full[free] = x
            return full

        fit = optimize.least_squares(
            lambda x: residual(embed(x)), grid_state[free],
            jac=lambda x: jacobian(embed(x))[:, free], method="lm", x_scale="jac",
            xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=REFINE_EVALS_PER_ITER * config.max_refine_iters)
        evals += int(fit.nfev)
        candidate = _project(embed(fit.x), periodic, box, False)
        cand_ll = ll(candidate)
        if cand_ll > best_ll:
            state, best_ll = candidate, cand_ll

    notes = []
    width = box[:, 1] - box[:, 0]
    outside = np.any((state < box[:, 0]) | (state > box[:, 1]))
    if outside:
        state = _project(state, periodic, box)
        best_ll = ll(state)
    edge = free & ~periodic & ((np.abs(state - box[:, 0]) <= 1e-9 * width)
                               | (np.abs(state - box[:, 1]) <= 1e-9 * width))
    if edge.any():
        names = ", ".join(np.array(["x", "y", "z", "alpha", "beta", "gamma"])[edge])
        notes.append(f"maximum on search-box boundary along {names}")
        warnings.warn(notes[-1], BoundaryHitWarning, stacklevel=2)
    return MleResult(state, best_ll, evals, grid_state, grid_ll, bool(edge.any()), tuple(notes))


def monte_carlo(scenario: Scenario, phase_profile, config: MleConfig, trials: int,
                seed: int = 0) -> np.ndarray:
    """Run ``trials`` noisy MLE fits at the scenario's true state.

    Returns the estimates, shape ``(trials, 6)``. Trial ``k`` draws its noise
    from the generator seeded with ``(seed, k)`` so runs are reproducible.
    """
    mu = response(scenario, phase_profile).mu
    sigma2 = scenario.noise_variance
    out = np.empty((trials, 6))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryHitWarning)
        for k in range(trials):
            rng = np.random.default_rng([seed, k])
            y = np.stack([add_noise(mu, sigma2, rng) for _ in range(config.snapshots)])
            out[k] = mle_estimate(y, scenario, phase_profile, config).state
    return out
