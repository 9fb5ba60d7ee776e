"""Physical scenario description shared by the signal, bound and design code."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    ArrayLayout,
    ResolvedArray,
    StationPose,
    planar_layout,
    resolve_array,
)

BOLTZMANN = 1.380649e-23

DEFAULT_CARRIER_HZ = 28e9
DEFAULT_SUBCARRIER_SPACING_HZ = 240e3
DEFAULT_NOISE_FIGURE_DB = 3.0
DEFAULT_TEMPERATURE_K = 290.0
DEFAULT_POWER_W = 1.0


@dataclass(frozen=True, eq=False)
class Station:
    pose: StationPose
    layout: ArrayLayout

    @cached_property
    def resolved(self) -> ResolvedArray:
        return resolve_array(self.pose, self.layout)

    @property
    def element_count(self) -> int:
        return self.layout.element_count


@dataclass(frozen=True, eq=False)
class SignalConfig:
    """Transmit-side signal parameters.

    ``beam_phases`` are the beamfocusing phases of ``w = exp(1j*beta)/sqrt(N_M)``
    (zeros when omitted), ``data_symbols`` the unit-modulus pilots ``p[n]`` (ones
    when omitted). ``ms_delays_s`` and ``ris_delays_s`` are per-element hardware
    delays, ``sync_residual_s`` the residual clock offset of synchronous links.
    """

    power: float = DEFAULT_POWER_W
    carrier_hz: float = DEFAULT_CARRIER_HZ
    subcarrier_count: int = 1
    subcarrier_spacing_hz: float = DEFAULT_SUBCARRIER_SPACING_HZ
    beam_phases: np.ndarray | None = None
    data_symbols: np.ndarray | None = None
    sync_residual_s: float = 0.0
    ms_delays_s: np.ndarray | None = None
    ris_delays_s: np.ndarray | None = None

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("power must be non-negative")
        if self.subcarrier_count < 1:
            raise ValueError("subcarrier_count must be positive")
        if self.data_symbols is not None:
            p = np.asarray(self.data_symbols, dtype=complex).reshape(-1)
            if p.size != self.subcarrier_count:
                raise ValueError("need one data symbol per subcarrier")
            if not np.allclose(np.abs(p), 1.0, atol=1e-12):
                raise ValueError("data symbols must have unit modulus")
            object.__setattr__(self, "data_symbols", p)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def frequencies(self) -> np.ndarray:
        """Subcarrier frequencies, centred on the carrier."""
        n = np.arange(1, self.subcarrier_count + 1)
        return self.carrier_hz + (n - (self.subcarrier_count + 1) / 2) * self.subcarrier_spacing_hz

    def symbols(self) -> np.ndarray:
        if self.data_symbols is None:
            return np.ones(self.subcarrier_count, dtype=complex)
        return self.data_symbols

    def beamformer(self, ms_elements: int) -> np.ndarray:
        beta = np.zeros(ms_elements) if self.beam_phases is None else np.asarray(self.beam_phases, float)
        if beta.shape != (ms_elements,):
            raise ValueError(f"expected {ms_elements} beam phases, got {beta.shape}")
        return np.exp(1j * beta) / np.sqrt(ms_elements)

    def element_delays(self, which: str, count: int) -> np.ndarray:
        raw = self.ms_delays_s if which == "ms" else self.ris_delays_s
        if raw is None:
            return np.zeros(count)
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (count,):
            raise ValueError(f"expected {count} {which} delays, got {raw.shape}")
        return raw


@dataclass(frozen=True)
class AsyncOffsets:
    """Common phase offsets (rad) of the direct and RIS paths without clock sync."""

    chi_bm: float = 0.0
    chi_brm: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "chi_bm", float(self.chi_bm) % (2 * np.pi))
        object.__setattr__(self, "chi_brm", float(self.chi_brm) % (2 * np.pi))


@dataclass(frozen=True, eq=False)
class Scenario:
    """BS (receiver), optional RIS, and MS (transmitter) plus signal and noise settings.

    ``sigma2`` overrides the thermal noise budget ``k*T*F*delta_f`` when given.
    """

    bs: Station
    ms: Station
    ris: Station | None = None
    signal: SignalConfig = field(default_factory=SignalConfig)
    synchronous: bool = True
    offsets: AsyncOffsets = field(default_factory=AsyncOffsets)
    noise_figure_db: float = DEFAULT_NOISE_FIGURE_DB
    temperature_k: float = DEFAULT_TEMPERATURE_K
    sigma2: float | None = None

    @property
    def wavelength(self) -> float:
        return self.signal.wavelength

    @property
    def frequencies(self) -> np.ndarray:
        return self.signal.frequencies

    @property
    def noise_variance(self) -> float:
        if self.sigma2 is not None:
            return float(self.sigma2)
        return thermal_noise_variance(self.signal.subcarrier_spacing_hz, self.noise_figure_db,
                                      self.temperature_k)

    @property
    def ms_state(self) -> np.ndarray:
        """``(x_M, y_M, z_M, alpha_M, beta_M, gamma_M)``."""
        return np.concatenate([self.ms.pose.centroid, self.ms.pose.orientation])

    def with_ms_state(self, state) -> "Scenario":
        state = np.asarray(state, dtype=float).reshape(6)
        ms = Station(StationPose(state[:3], state[3:]), self.ms.layout)
        return replace(self, ms=ms)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


def thermal_noise_variance(bandwidth_hz: float, noise_figure_db: float = DEFAULT_NOISE_FIGURE_DB,
                           temperature_k: float = DEFAULT_TEMPERATURE_K) -> float:
    """Noise power ``k_B * T0 * F * B`` in watts."""
    return BOLTZMANN * temperature_k * 10 ** (noise_figure_db / 10) * bandwidth_hz


def default_scenario(bs_centroid=(0, 0, 0), ms_state=(0, 0, 0, 0, 0, 0), ris_centroid=None, *,
                     bs_elements=16, ms_elements=4, ris_elements=16, subcarrier_count=1,
                     carrier_hz=DEFAULT_CARRIER_HZ, spacing=None, **kwargs) -> Scenario:
    """Planar-array scenario with the usual orientations (BS on xz, RIS on yz, MS on xy).

    ``spacing`` defaults to half a wavelength. Remaining keyword arguments are
    passed to :class:`Scenario`, except ``signal`` options which go through
    ``signal_kwargs``.
    """
    signal_kwargs = kwargs.pop("signal_kwargs", {})
    signal = SignalConfig(carrier_hz=carrier_hz, subcarrier_count=subcarrier_count, **signal_kwargs)
    d = signal.wavelength / 2 if spacing is None else spacing
    ms_state = np.asarray(ms_state, dtype=float)
    bs = Station(StationPose(bs_centroid), planar_layout(bs_elements, d, "xz"))
    ms = Station(StationPose(ms_state[:3], ms_state[3:]), planar_layout(ms_elements, d, "xy"))
    ris = None
    if ris_centroid is not None and ris_elements:
        ris = Station(StationPose(ris_centroid), planar_layout(ris_elements, d, "yz"))
    return Scenario(bs=bs, ms=ms, ris=ris, signal=signal, **kwargs)
