"""Noiseless received signal at the BS under exact spherical-wavefront propagation.

The per-element distance follows the centroid decomposition

    d_sm**2 = |p_m|**2 + |p_s|**2 + D**2 - 2*G1 + 2*D*G2,
    G1 = p_s . p_m,   G2 = (p_m - p_s) . u,

with ``u`` the unit vector from the receiving centroid towards the transmitting
one and ``p_s``, ``p_m`` the rotated element offsets. With this sign the
decomposition is identical to the Euclidean distance between the elements.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SPEED_OF_LIGHT, Link, centroid_link
from .scenario import AsyncOffsets, Scenario


@dataclass(frozen=True, eq=False)
class ChannelResponse:
    """``mu = direct_part + ris_part``; shape ``(N_B,)`` or ``(N, N_B)``."""

    direct_part: np.ndarray
    ris_part: np.ndarray

    @property
    def mu(self) -> np.ndarray:
        return self.direct_part + self.ris_part


def element_distance(rx_offsets, tx_offsets, link: Link) -> np.ndarray:
    """Distances between every receive and transmit element, shape ``(N_rx, N_tx)``.

    Parameters
    ----------
    rx_offsets, tx_offsets : array_like, shape (N, 3)
        Element positions relative to their own (rotated) array centroid.
    link : Link
        Centroid link from the receiver to the transmitter.
    """
    rx = np.atleast_2d(np.asarray(rx_offsets, dtype=float))
    tx = np.atleast_2d(np.asarray(tx_offsets, dtype=float))
    dist = link.distance
    u = link.direction
    g1 = rx @ tx.T
    g2 = (tx @ u)[None, :] - (rx @ u)[:, None]
    d2 = (tx * tx).sum(1)[None, :] + (rx * rx).sum(1)[:, None] + dist ** 2 - 2 * g1 + 2 * dist * g2
    return np.sqrt(np.maximum(d2, 0.0))


def path_gains(d_bm, d_br, d_rm, wavelength):
    """Free-space amplitudes ``(rho_BM, rho_BRM)`` of the direct and RIS paths.

    ``d_br`` and ``d_rm`` may be ``None`` when there is no RIS; ``rho_BRM`` is then 0.
    """
    if d_bm <= 0 or (d_br is not None and d_br <= 0) or (d_rm is not None and d_rm <= 0):
        raise ValueError("path gains need strictly positive distances")
    rho_bm = wavelength / (4 * np.pi) / d_bm
    if d_br is None or d_rm is None:
        return rho_bm, 0.0
    return rho_bm, wavelength / (4 * np.pi) / (d_rm + d_br)


def _phase_vector(profile, count):
    if count == 0:
        return np.zeros(0)
    if profile is None:
        phases = np.zeros(count)
    else:
        phases = np.asarray(getattr(profile, "phases", profile), dtype=float).reshape(-1)
    if phases.shape != (count,):
        raise ValueError(f"phase profile has {phases.size} entries, RIS has {count} elements")
    return phases


class Propagation:
    """Link geometry and phasors of a scenario, shared by responses and derivatives.

    All phasor arrays carry a leading subcarrier axis. With asynchronous
    signalling the element distances are replaced by their differences to the
    centroid distance and the common phase offsets take the place of the
    synchronisation residual. ``ris_weights`` optionally replaces the unit
    reflection coefficients ``exp(1j*phases)`` by arbitrary complex values.
    """

    def __init__(self, scenario: Scenario, profile=None, subcarriers=None, synchronous=None,
                 offsets: AsyncOffsets | None = None, channel: dict | None = None,
                 ris_weights=None):
        self.scenario = scenario
        self.synchronous = scenario.synchronous if synchronous is None else bool(synchronous)
        offsets = scenario.offsets if offsets is None else offsets
        sig = scenario.signal
        bs, ms = scenario.bs.resolved, scenario.ms.resolved
        self.bs, self.ms = bs, ms
        self.has_ris = scenario.ris is not None
        self.ris = scenario.ris.resolved if self.has_ris else None
        n_ris = self.ris.element_count if self.has_ris else 0
        self.phases = _phase_vector(profile, n_ris)

        freqs = sig.frequencies
        idx = np.arange(freqs.size) if subcarriers is None else np.atleast_1d(subcarriers)
        self.subcarriers = idx
        self.freqs = freqs[idx]
        self.k = 2 * np.pi * self.freqs / SPEED_OF_LIGHT
        self.x = sig.symbols()[idx][:, None] * sig.beamformer(ms.element_count)[None, :]
        self.sqrt_power = np.sqrt(sig.power)
        self.wavelength = sig.wavelength

        # ``channel`` replaces the MS-dependent centroid links and path gains by
        # free values (delays in seconds), as in the two-stage parameterisation
        channel = channel or {}
        self.link_bm = centroid_link(bs.pose, ms.pose)
        if "tau_BM" in channel:
            self.link_bm = Link(SPEED_OF_LIGHT * channel["tau_BM"], channel["theta_BM"], channel["phi_BM"])
        self.d_bm = element_distance(bs.offsets, ms.offsets, self.link_bm)
        eta_m = sig.element_delays("ms", ms.element_count)
        two_pi_f = 2 * np.pi * self.freqs
        if self.synchronous:
            common = np.exp(-1j * two_pi_f * sig.sync_residual_s)
            self.common_bm = common
            self.common_brm = common
        else:
            self.common_bm = np.full(self.freqs.size, np.exp(-1j * offsets.chi_bm))
            self.common_brm = np.full(self.freqs.size, np.exp(-1j * offsets.chi_brm))

        self.dt_bm = self.d_bm - (0.0 if self.synchronous else self.link_bm.distance)
        self.E_bm = np.exp(-1j * (self.k[:, None, None] * self.dt_bm[None]
                                  + two_pi_f[:, None, None] * eta_m[None, None, :]))

        if self.has_ris:
            ris = self.ris
            self.link_br = centroid_link(bs.pose, ris.pose)
            self.link_rm = centroid_link(ris.pose, ms.pose)
            if "tau_RM" in channel:
                self.link_rm = Link(SPEED_OF_LIGHT * channel["tau_RM"], channel["theta_RM"],
                                    channel["phi_RM"])
            self.d_br = element_distance(bs.offsets, ris.offsets, self.link_br)
            self.d_rm = element_distance(ris.offsets, ms.offsets, self.link_rm)
            self.rho_bm, self.rho_brm = path_gains(self.link_bm.distance, self.link_br.distance,
                                                   self.link_rm.distance, self.wavelength)
            eta_r = sig.element_delays("ris", ris.element_count)
            self.dt_br = self.d_br - (0.0 if self.synchronous else self.link_br.distance)
            self.dt_rm = self.d_rm - (0.0 if self.synchronous else self.link_rm.distance)
            omega = np.exp(1j * self.phases) if ris_weights is None else np.asarray(ris_weights, complex)
            self.A = (np.exp(-1j * (self.k[:, None, None] * self.dt_br[None]
                                    + two_pi_f[:, None, None] * eta_r[None, None, :]))
                      * omega[None, None, :])
            self.B = np.exp(-1j * (self.k[:, None, None] * self.dt_rm[None]
                                   + two_pi_f[:, None, None] * eta_m[None, None, :]))
        else:
            self.rho_bm, self.rho_brm = path_gains(self.link_bm.distance, None, None, self.wavelength)
        self.rho_bm = channel.get("rho_BM", self.rho_bm)
        self.rho_brm = channel.get("rho_BRM", self.rho_brm)

    # weighted sums over the MS elements (direct) and over (RIS, MS) pairs (reflected)
    def direct_sum(self, weights=None) -> np.ndarray:
        """``sum_m x_m E_bm w_bm``; weights of shape (N_B, N_M) or (N_B, N_M, K)."""
        if weights is None:
            return np.einsum("nbm,nm->nb", self.E_bm, self.x)
        if weights.ndim == 2:
            return np.einsum("nbm,nm,bm->nb", self.E_bm, self.x, weights)
        return np.einsum("nbm,nm,bmk->nbk", self.E_bm, self.x, weights)

    def ris_sum(self, weights=None) -> np.ndarray:
        """``sum_r sum_m A_br B_rm x_m w_rm``; weights of shape (N_R, N_M) or (N_R, N_M, K)."""
        if not self.has_ris:
            shape = (self.freqs.size, self.bs.element_count)
            if weights is not None and weights.ndim == 3:
                shape += (weights.shape[2],)
            return np.zeros(shape, dtype=complex)
        bx = self.B * self.x[:, None, :]
        if weights is None:
            y = bx.sum(axis=2)
            return np.einsum("nbr,nr->nb", self.A, y)
        if weights.ndim == 2:
            y = np.einsum("nrm,rm->nr", bx, weights)
            return np.einsum("nbr,nr->nb", self.A, y)
        y = np.einsum("nrm,rmk->nrk", bx, weights)
        return np.einsum("nbr,nrk->nbk", self.A, y)

    def direct_part(self) -> np.ndarray:
        return self.sqrt_power * self.rho_bm * self.common_bm[:, None] * self.direct_sum()

    def ris_part(self) -> np.ndarray:
        if not self.has_ris:
            return np.zeros((self.freqs.size, self.bs.element_count), dtype=complex)
        return self.sqrt_power * self.rho_brm * self.common_brm[:, None] * self.ris_sum()


def _response(scenario, profile, n, synchronous, offsets=None) -> ChannelResponse:
    prop = Propagation(scenario, profile, subcarriers=n, synchronous=synchronous, offsets=offsets)
    direct, ris = prop.direct_part(), prop.ris_part()
    if n is not None and np.ndim(n) == 0:
        direct, ris = direct[0], ris[0]
    return ChannelResponse(direct, ris)


def synchronous_response(scenario: Scenario, profile=None, n=None) -> ChannelResponse:
    """Noiseless synchronous BS signal.

    ``n`` selects a zero-based subcarrier index (1-D result) or, when ``None``,
    returns every subcarrier stacked as ``(N, N_B)``.
    """
    return _response(scenario, profile, n, True)


def asynchronous_response(scenario: Scenario, profile=None, offsets: AsyncOffsets | None = None,
                          n=None) -> ChannelResponse:
    """Noiseless BS signal without BS/MS clock synchronisation.

    Only the wavefront curvature (element delays minus centroid delay) is kept;
    ``offsets`` supplies the common phase of each path (defaults to the
    scenario's offsets).
    """
    return _response(scenario, profile, n, False, offsets)


def response(scenario: Scenario, profile=None, n=None) -> ChannelResponse:
    """Dispatch on ``scenario.synchronous``."""
    return _response(scenario, profile, n, scenario.synchronous)


def add_noise(response, sigma2: float, rng_seed=None) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise of variance ``sigma2``."""
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    mu = response.mu if isinstance(response, ChannelResponse) else np.asarray(response, dtype=complex)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    noise = rng.standard_normal(mu.shape + (2,)) * np.sqrt(sigma2 / 2)
    return mu + noise[..., 0] + 1j * noise[..., 1]
