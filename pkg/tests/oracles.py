"""Independent reference computations shared by the test modules."""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from risloc.geometry import SPEED_OF_LIGHT
from risloc.scenario import AsyncOffsets, default_scenario

SIZES = (1, 4, 9, 16)


def five_point(f, h):
    """Central 5-point derivative of ``f`` at 0 with step ``h``."""
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)


def column_error(fd, analytic):
    """Relative error of one derivative column, measured in the 2-norm."""
    scale = np.linalg.norm(analytic)
    if scale == 0:
        return float(np.linalg.norm(fd))
    return float(np.linalg.norm(fd - analytic) / scale)


def pairwise_distances(rx_positions, tx_positions):
    diff = np.asarray(rx_positions)[:, None, :] - np.asarray(tx_positions)[None, :, :]
    return np.sqrt((diff**2).sum(-1))


def random_scenario(rng, synchronous=True, with_ris=True, subcarriers=2, max_elements=16):
    """Small scenario with the MS kept away from the vertical through the BS and RIS."""
    sizes = [s for s in SIZES if s <= max_elements]
    ris = np.array([rng.uniform(2, 4), rng.uniform(2, 4), rng.uniform(-1, 1)])
    while True:
        pos = np.array([rng.uniform(1, 5), rng.uniform(-3, 1), rng.uniform(-3, -0.5)])
        if min(np.hypot(*pos[:2]), np.hypot(*(pos - ris)[:2])) > 0.8:
            break
    state = np.r_[pos, rng.uniform(-1.2, 1.2, 3)]
    return default_scenario((0, 0, 0), state, ris if with_ris else None,
                            bs_elements=int(rng.choice(sizes)), ms_elements=int(rng.choice(sizes)),
                            ris_elements=int(rng.choice(sizes)), subcarrier_count=subcarriers,
                            synchronous=synchronous,
                            offsets=AsyncOffsets(*rng.uniform(0, 2 * np.pi, 2)))


def brute_force_mean(scenario, phases=None):
    """Noise-free received signal from absolute element positions, ``(N, N_B)``."""
    sig = scenario.signal
    bs = scenario.bs.resolved.element_positions
    ms = scenario.ms.resolved.element_positions
    n_m = ms.shape[0]
    w = np.ones(n_m) / np.sqrt(n_m)
    lam = sig.wavelength
    d_bm_c = np.linalg.norm(scenario.ms.pose.centroid - scenario.bs.pose.centroid)
    out = []
    for f in sig.frequencies:
        k = 2 * np.pi * f / SPEED_OF_LIGHT
        d = pairwise_distances(bs, ms)
        if scenario.synchronous:
            direct = np.exp(-1j * k * d)
        else:
            direct = np.exp(-1j * scenario.offsets.chi_bm) * np.exp(-1j * k * (d - d_bm_c))
        mu = lam / (4 * np.pi * d_bm_c) * direct @ w
        if scenario.ris is not None:
            ris = scenario.ris.resolved.element_positions
            d_br_c = np.linalg.norm(scenario.ris.pose.centroid - scenario.bs.pose.centroid)
            d_rm_c = np.linalg.norm(scenario.ms.pose.centroid - scenario.ris.pose.centroid)
            theta = np.zeros(ris.shape[0]) if phases is None else np.asarray(phases)
            d_br, d_rm = pairwise_distances(bs, ris), pairwise_distances(ris, ms)
            if scenario.synchronous:
                a, b, common = np.exp(-1j * k * d_br), np.exp(-1j * k * d_rm), 1.0
            else:
                a = np.exp(-1j * k * (d_br - d_br_c))
                b = np.exp(-1j * k * (d_rm - d_rm_c))
                common = np.exp(-1j * scenario.offsets.chi_brm)
            mu = mu + common * lam / (4 * np.pi * (d_br_c + d_rm_c)) * (a * np.exp(1j * theta)) @ b @ w
        out.append(np.sqrt(sig.power) * mu)
    return np.array(out)


def _path_excess(rx, tx, distance, direction):
    """``d - D`` per element pair without cancellation, plus ``d`` itself."""
    rel = tx[None, :, :] - rx[:, None, :]
    vec = distance * direction + rel
    d = np.sqrt((vec**2).sum(-1))
    excess = ((rel**2).sum(-1) + 2 * distance * rel @ direction) / (d + distance)
    return d, excess


def _direction(elevation, azimuth):
    return np.array([np.cos(elevation) * np.cos(azimuth), np.cos(elevation) * np.sin(azimuth),
                     np.sin(elevation)])


def channel_mean(scenario, gamma, phases):
    """Mean signal from free channel parameters, written from scratch, ``(N, N_B)``."""
    sig = scenario.signal
    bs = scenario.bs.resolved.offsets
    turn = Rotation.from_euler("ZYX", [gamma["alpha_M"], gamma["beta_M"], gamma["gamma_M"]])
    ms = turn.apply(scenario.ms.layout.initial_positions)
    w = np.ones(ms.shape[0]) / np.sqrt(ms.shape[0])
    d_bm, ex_bm = _path_excess(bs, ms, SPEED_OF_LIGHT * gamma["tau_BM"],
                               _direction(gamma["theta_BM"], gamma["phi_BM"]))
    ris = scenario.ris.resolved
    link = scenario.ris.pose.centroid - scenario.bs.pose.centroid
    d_br_c = np.linalg.norm(link)
    d_br, ex_br = _path_excess(bs, ris.offsets, d_br_c, link / d_br_c)
    d_rm, ex_rm = _path_excess(ris.offsets, ms, SPEED_OF_LIGHT * gamma["tau_RM"],
                               _direction(gamma["theta_RM"], gamma["phi_RM"]))
    sync = scenario.synchronous
    out = []
    for f in sig.frequencies:
        k = 2 * np.pi * f / SPEED_OF_LIGHT
        if sync:
            direct, a, b = np.exp(-1j * k * d_bm), np.exp(-1j * k * d_br), np.exp(-1j * k * d_rm)
            c_bm = c_brm = 1.0
        else:
            direct, a, b = np.exp(-1j * k * ex_bm), np.exp(-1j * k * ex_br), np.exp(-1j * k * ex_rm)
            c_bm = np.exp(-1j * scenario.offsets.chi_bm)
            c_brm = np.exp(-1j * scenario.offsets.chi_brm)
        mu = c_bm * gamma["rho_BM"] * direct @ w
        mu = mu + c_brm * gamma["rho_BRM"] * (a * np.exp(1j * np.asarray(phases))) @ b @ w
        out.append(np.sqrt(sig.power) * mu)
    return np.array(out)
