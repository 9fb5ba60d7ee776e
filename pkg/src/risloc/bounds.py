"""Fisher information, CRLB, PEB/OEB and GDOP for the MS pose.

Two parameterisations are supported. ``direct`` differentiates the received
signal with respect to the MS state ``s = (x, y, z, alpha, beta, gamma)``;
``two_stage`` first differentiates with respect to the channel parameters
``Gamma`` (path gains, angles, delays, MS orientation) and maps the resulting
information to ``s`` through the Jacobian ``J = dGamma/ds``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .geometry import SPEED_OF_LIGHT, Link, rotation_derivatives
from .scenario import Scenario
from .signal_model import Propagation

STATE_LABELS = ("x_M", "y_M", "z_M", "alpha_M", "beta_M", "gamma_M")
CHANNEL_LABELS = ("rho_BM", "theta_BM", "phi_BM", "tau_BM",
                  "rho_BRM", "theta_RM", "phi_RM", "tau_RM",
                  "alpha_M", "beta_M", "gamma_M")
DIRECT_CHANNEL_LABELS = ("rho_BM", "theta_BM", "phi_BM", "tau_BM", "alpha_M", "beta_M", "gamma_M")
POSITION_LABELS = STATE_LABELS[:3]
ORIENTATION_LABELS = STATE_LABELS[3:]

DEFAULT_CONDITION_CAP = 1e12
PINV_CUTOFF = 1e-12


class UnidentifiableError(ValueError):
    """The FIM is singular or too ill-conditioned on the requested parameters.

    ``combination`` maps parameter labels to the (equilibrated) weights of the
    least-informed direction.
    """

    def __init__(self, message: str, combination: dict | None = None, condition_number=np.inf):
        super().__init__(message)
        self.combination = combination or {}
        self.condition_number = condition_number


class SingularJacobianWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class FimMatrix:
    """Fisher information over ``labels``, summed over the used subcarriers.

    For the two-stage mode ``channel`` holds ``I(Gamma)`` and ``jacobian`` the
    ``6 x |Gamma|`` map used to obtain ``matrix = J I(Gamma) J^T``.
    """

    matrix: np.ndarray
    labels: tuple
    subcarriers_accumulated: int
    mode: str = "direct"
    noise_variance: float = 1.0
    power: float = 1.0
    bm_distance: float = 1.0
    channel: "FimMatrix | None" = None
    jacobian: np.ndarray | None = None
    warnings: tuple = ()


@dataclass(frozen=True, eq=False)
class BoundReport:
    peb: float
    oeb: float
    gdop_position: float
    gdop_orientation: float
    per_parameter_sigmas: dict
    condition_number: float
    labels: tuple
    covariance: np.ndarray
    mode: str = "direct"
    warnings: tuple = field(default=())

    @property
    def oeb_deg(self) -> float:
        return float(np.degrees(self.oeb))


@dataclass(frozen=True, eq=False)
class ChannelJacobian:
    """``d Gamma / d s`` with rows ordered as the state and columns as ``Gamma``."""

    matrix: np.ndarray
    channel_labels: tuple
    warnings: tuple = ()

    @property
    def state_labels(self):
        return STATE_LABELS


# --------------------------------------------------------------------------
# channel parameters
# --------------------------------------------------------------------------

def channel_labels(scenario: Scenario) -> tuple:
    return CHANNEL_LABELS if scenario.ris is not None else DIRECT_CHANNEL_LABELS


def channel_parameters(scenario: Scenario) -> dict:
    """Map the MS state of ``scenario`` to the two-stage channel parameters."""
    prop = Propagation(scenario, subcarriers=[0])
    out = {"rho_BM": prop.rho_bm, "theta_BM": prop.link_bm.elevation,
           "phi_BM": prop.link_bm.azimuth, "tau_BM": prop.link_bm.distance / SPEED_OF_LIGHT}
    if prop.has_ris:
        out.update(rho_BRM=prop.rho_brm, theta_RM=prop.link_rm.elevation,
                   phi_RM=prop.link_rm.azimuth, tau_RM=prop.link_rm.distance / SPEED_OF_LIGHT)
    alpha, beta, gamma = scenario.ms.pose.orientation
    out.update(alpha_M=alpha, beta_M=beta, gamma_M=gamma)
    return out


def channel_response(scenario: Scenario, gamma: dict, profile=None, n=None) -> np.ndarray:
    """Mean BS signal evaluated from free channel parameters ``gamma``.

    Useful to differentiate numerically with respect to ``Gamma``; the MS
    centroid of ``scenario`` is irrelevant, only its orientation is replaced.
    """
    state = scenario.ms_state.copy()
    state[3:] = [gamma["alpha_M"], gamma["beta_M"], gamma["gamma_M"]]
    prop = Propagation(scenario.with_ms_state(state), profile, subcarriers=n, channel=gamma)
    mu = prop.direct_part() + prop.ris_part()
    return mu[0] if n is not None and np.ndim(n) == 0 else mu


# --------------------------------------------------------------------------
# derivative kernels of the element distances
# --------------------------------------------------------------------------

def _unit_vector_derivatives(link: Link):
    st, ct = np.sin(link.elevation), np.cos(link.elevation)
    sp, cp = np.sin(link.azimuth), np.cos(link.azimuth)
    return np.array([-st * cp, -st * sp, ct]), np.array([-ct * sp, ct * cp, 0.0])


def g2_gradient(rx_offsets, tx_offsets, link: Link, expanded: bool = True) -> np.ndarray:
    """Gradient of ``G2 = (p_m - p_s) . u`` with respect to the transmitter centroid.

    ``expanded`` evaluates the per-axis closed forms; otherwise the chain rule
    through elevation and azimuth is used (singular at the pole).
    Shape ``(N_rx, N_tx, 3)``.
    """
    diff = tx_offsets[None, :, :] - rx_offsets[:, None, :]
    dist = link.distance
    st, ct = np.sin(link.elevation), np.cos(link.elevation)
    sp, cp = np.sin(link.azimuth), np.cos(link.azimuth)
    if not expanded:
        du_dt, du_dp = _unit_vector_derivatives(link)
        grad_t, grad_p = angle_gradients(link)
        return ((diff @ du_dt)[..., None] * grad_t + (diff @ du_dp)[..., None] * grad_p)
    dx, dy, dz = diff[..., 0] / dist, diff[..., 1] / dist, diff[..., 2] / dist
    gx = dx * (st**2 * cp**2 + sp**2) + dy * (st**2 * cp * sp - sp * cp) - dz * st * ct * cp
    gy = dx * (st**2 * sp * cp - sp * cp) + dy * (st**2 * sp**2 + cp**2) - dz * st * ct * sp
    gz = -dx * st * ct * cp - dy * st * ct * sp + dz * ct**2
    return np.stack([gx, gy, gz], axis=-1)


def distance_position_gradient(rx_offsets, tx_offsets, link: Link, distances) -> np.ndarray:
    """``d d_sm / d p_M`` for every element pair, shape ``(N_rx, N_tx, 3)``."""
    u = link.direction
    g2 = (tx_offsets @ u)[None, :] - (rx_offsets @ u)[:, None]
    dist = link.distance
    num = (dist + g2)[..., None] * u + dist * g2_gradient(rx_offsets, tx_offsets, link)
    return num / distances[..., None]


def distance_orientation_gradient(rx_offsets, tx_offsets, tx_offset_derivs, link: Link,
                                  distances) -> np.ndarray:
    """``d d_sm / d (alpha, beta, gamma)``, shape ``(N_rx, N_tx, 3)``.

    ``tx_offset_derivs[k]`` holds the derivative of the transmitter offsets
    with respect to the k-th orientation angle.
    """
    lever = tx_offsets[None, :, :] - rx_offsets[:, None, :] + link.distance * link.direction
    return np.einsum("smi,kmi->smk", lever, tx_offset_derivs) / distances[..., None]


def distance_link_gradient(rx_offsets, tx_offsets, link: Link, distances) -> np.ndarray:
    """``d d_sm / d (D, theta, phi)`` holding the element offsets fixed."""
    diff = tx_offsets[None, :, :] - rx_offsets[:, None, :]
    u = link.direction
    du_dt, du_dp = _unit_vector_derivatives(link)
    dist = link.distance
    return np.stack([(dist + diff @ u) / distances,
                     dist * (diff @ du_dt) / distances,
                     dist * (diff @ du_dp) / distances], axis=-1)


def _ms_offset_derivatives(scenario: Scenario) -> np.ndarray:
    q = scenario.ms.layout.initial_positions
    return np.einsum("kij,mj->kmi", rotation_derivatives(scenario.ms.pose.orientation), q)


# --------------------------------------------------------------------------
# Jacobian of the channel parameters
# --------------------------------------------------------------------------

def angle_gradients(link: Link):
    """Closed-form ``(grad theta, grad phi)`` with respect to the transmitter centroid."""
    st, ct = np.sin(link.elevation), np.cos(link.elevation)
    sp, cp = np.sin(link.azimuth), np.cos(link.azimuth)
    dist = link.distance
    grad_theta = np.array([-st * cp, -st * sp, ct]) / dist
    with np.errstate(divide="ignore", invalid="ignore"):
        grad_phi = np.array([-sp, cp, 0.0]) / (dist * ct)
    return grad_theta, grad_phi


def angle_gradients_from_coordinates(rx_centroid, tx_centroid):
    """Angle gradients from ``phi = atan(dy/dx)`` and ``theta = asin(dz/D)``."""
    dx, dy, dz = np.asarray(tx_centroid, float) - np.asarray(rx_centroid, float)
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    r = dy / dx
    grad_phi = np.array([-dy / dx**2, 1 / dx, 0.0]) / (1 + r * r)
    q = dz / dist
    grad_q = np.array([-dz * dx, -dz * dy, dist**2 - dz * dz]) / dist**3
    grad_theta = grad_q / np.sqrt(1 - q * q)
    return grad_theta, grad_phi


def jacobian_two_stage(scenario: Scenario) -> ChannelJacobian:
    """``J = d Gamma / d s`` with the identity block for the orientation."""
    prop = Propagation(scenario, subcarriers=[0])
    labels = channel_labels(scenario)
    lam = prop.wavelength
    jac = np.zeros((6, len(labels)))
    notes = []

    def fill(offset, link, gain_distance):
        u = link.direction
        grad_theta, grad_phi = angle_gradients(link)
        if link.is_pole:
            notes.append(f"azimuth undefined at elevation {np.degrees(link.elevation):.1f} deg; "
                         "Jacobian is singular")
            grad_phi = np.zeros(3)
        jac[:3, offset] = -lam / (4 * np.pi * gain_distance**2) * u
        jac[:3, offset + 1] = grad_theta
        jac[:3, offset + 2] = grad_phi
        jac[:3, offset + 3] = u / SPEED_OF_LIGHT

    fill(0, prop.link_bm, prop.link_bm.distance)
    if prop.has_ris:
        fill(4, prop.link_rm, prop.link_rm.distance + prop.link_br.distance)
    jac[3:, -3:] = np.eye(3)
    for note in notes:
        warnings.warn(note, SingularJacobianWarning, stacklevel=2)
    return ChannelJacobian(jac, labels, tuple(notes))


# --------------------------------------------------------------------------
# mean derivatives
# --------------------------------------------------------------------------

def _squeeze(arr, n):
    return arr[0] if n is not None and np.ndim(n) == 0 else arr


def mean_derivatives_two_stage(scenario: Scenario, phase_profile=None, n=None,
                               ris_weights=None) -> np.ndarray:
    """``d mu_b[n] / d Gamma_j``.

    Shape ``(N_B, |Gamma|)`` for an integer ``n``; ``(N, N_B, |Gamma|)`` over
    all subcarriers when ``n`` is ``None``.
    """
    prop = Propagation(scenario, phase_profile, subcarriers=n, ris_weights=ris_weights)
    sync = prop.synchronous
    ms = prop.ms
    dq = _ms_offset_derivatives(scenario)
    jk = -1j * prop.k[:, None, None]
    base_d = (prop.sqrt_power * prop.rho_bm * prop.common_bm)[:, None, None]

    cols = []
    kb = distance_link_gradient(prop.bs.offsets, ms.offsets, prop.link_bm, prop.d_bm)
    kb[..., 0] -= 0.0 if sync else 1.0
    kb[..., 0] *= SPEED_OF_LIGHT
    direct = prop.direct_part()
    d_link = base_d * jk * prop.direct_sum(kb)
    cols += [direct / prop.rho_bm, d_link[..., 1], d_link[..., 2], d_link[..., 0]]
    h = distance_orientation_gradient(prop.bs.offsets, ms.offsets, dq, prop.link_bm, prop.d_bm)
    d_orient = base_d * jk * prop.direct_sum(h)

    if prop.has_ris:
        base_r = (prop.sqrt_power * prop.rho_brm * prop.common_brm)[:, None, None]
        kr = distance_link_gradient(prop.ris.offsets, ms.offsets, prop.link_rm, prop.d_rm)
        kr[..., 0] -= 0.0 if sync else 1.0
        kr[..., 0] *= SPEED_OF_LIGHT
        r_link = base_r * jk * prop.ris_sum(kr)
        cols += [prop.ris_part() / prop.rho_brm, r_link[..., 1], r_link[..., 2], r_link[..., 0]]
        h = distance_orientation_gradient(prop.ris.offsets, ms.offsets, dq, prop.link_rm, prop.d_rm)
        d_orient = d_orient + base_r * jk * prop.ris_sum(h)

    out = np.concatenate([np.stack(cols, axis=-1), d_orient], axis=-1)
    return _squeeze(out, n)


def mean_derivatives_direct(scenario: Scenario, phase_profile=None, n=None,
                            ris_weights=None) -> np.ndarray:
    """``d mu_b[n] / d s`` for ``s = (x_M, y_M, z_M, alpha_M, beta_M, gamma_M)``.

    Shape ``(N_B, 6)`` for an integer ``n``, ``(N, N_B, 6)`` otherwise.
    """
    prop = Propagation(scenario, phase_profile, subcarriers=n, ris_weights=ris_weights)
    sync = prop.synchronous
    ms = prop.ms
    dq = _ms_offset_derivatives(scenario)
    jk = -1j * prop.k[:, None, None]
    lam = prop.wavelength

    u = prop.link_bm.direction
    g = distance_position_gradient(prop.bs.offsets, ms.offsets, prop.link_bm, prop.d_bm)
    if not sync:
        g = g - u
    h = distance_orientation_gradient(prop.bs.offsets, ms.offsets, dq, prop.link_bm, prop.d_bm)
    grad_rho = -lam / (4 * np.pi * prop.link_bm.distance**2) * u
    base = (prop.sqrt_power * prop.rho_bm * prop.common_bm)[:, None, None]
    out = base * jk * prop.direct_sum(np.concatenate([g, h], axis=-1))
    # path gains depend on the position only
    out[..., :3] += prop.direct_part()[..., None] * (grad_rho / prop.rho_bm)

    if prop.has_ris:
        u = prop.link_rm.direction
        g = distance_position_gradient(prop.ris.offsets, ms.offsets, prop.link_rm, prop.d_rm)
        if not sync:
            g = g - u
        h = distance_orientation_gradient(prop.ris.offsets, ms.offsets, dq, prop.link_rm, prop.d_rm)
        grad_rho = -lam / (4 * np.pi * (prop.link_rm.distance + prop.link_br.distance)**2) * u
        base = (prop.sqrt_power * prop.rho_brm * prop.common_brm)[:, None, None]
        out[..., :3] += prop.ris_part()[..., None] * (grad_rho / prop.rho_brm)
        out += base * jk * prop.ris_sum(np.concatenate([g, h], axis=-1))
    return _squeeze(out, n)


# --------------------------------------------------------------------------
# FIM and bounds
# --------------------------------------------------------------------------

def _information(derivs: np.ndarray, sigma2: float, power: float) -> np.ndarray:
    # ``derivs`` are taken at unit power so that P and sigma2 enter as one scalar;
    # doubling either then scales the FIM exactly
    grams = np.einsum("nbi,nbj->nij", derivs.conj(), derivs).real
    fim = (2.0 * power / sigma2) * grams.sum(axis=0)
    return 0.5 * (fim + fim.T)


def _unit_power(scenario: Scenario) -> Scenario:
    return scenario.replace(signal=replace(scenario.signal, power=1.0))


def default_mode(scenario: Scenario) -> str:
    return "two_stage" if scenario.synchronous else "direct"


def assemble_fim(scenario: Scenario, phase_profile=None, mode: str = "auto",
                 subcarriers=None) -> FimMatrix:
    """Fisher information of the MS state summed over subcarriers.

    ``mode`` is ``"direct"``, ``"two_stage"`` or ``"auto"`` (two-stage for
    synchronous and direct for asynchronous signalling).
    """
    if mode == "auto":
        mode = default_mode(scenario)
    if mode not in ("direct", "two_stage"):
        raise ValueError(f"unknown FIM mode {mode!r}")
    sigma2 = scenario.noise_variance
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    idx = np.arange(scenario.signal.subcarrier_count) if subcarriers is None else np.atleast_1d(subcarriers)
    meta = dict(subcarriers_accumulated=int(idx.size), noise_variance=sigma2,
                power=scenario.signal.power,
                bm_distance=float(np.linalg.norm(scenario.ms.pose.centroid - scenario.bs.pose.centroid)))
    unit, power = _unit_power(scenario), scenario.signal.power
    if mode == "direct":
        info = _information(mean_derivatives_direct(unit, phase_profile, idx), sigma2, power)
        return FimMatrix(info, STATE_LABELS, mode="direct", **meta)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SingularJacobianWarning)
        jac = jacobian_two_stage(scenario)
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)
    info_gamma = _information(mean_derivatives_two_stage(unit, phase_profile, idx), sigma2,
                              power)
    channel = FimMatrix(info_gamma, jac.channel_labels, mode="channel", **meta)
    info = jac.matrix @ info_gamma @ jac.matrix.T
    return FimMatrix(0.5 * (info + info.T), STATE_LABELS, mode="two_stage", channel=channel,
                     jacobian=jac.matrix, warnings=jac.warnings, **meta)


def _describe(vector, labels, top: int = 3) -> tuple[str, dict]:
    order = np.argsort(-np.abs(vector))[:top]
    combo = {labels[i]: float(vector[i]) for i in order if abs(vector[i]) > 1e-3}
    text = " ".join(f"{w:+.3f}*{name}" for name, w in combo.items())
    return text, combo


def invert_information(matrix, labels, condition_cap: float = DEFAULT_CONDITION_CAP,
                       partial: bool = False):
    """Return ``(inverse, condition_number, unidentified)`` of an information matrix.

    The matrix is symmetrised and Jacobi-equilibrated before the condition
    check and the Cholesky solve; if Cholesky fails an eigen pseudo-inverse
    with relative cutoff ``PINV_CUTOFF`` is used.

    With ``partial`` an ill-conditioned matrix does not raise: the returned
    generalized inverse is exact for every parameter outside the near-null
    space, and the labels touching that space are listed in ``unidentified``
    (their diagonal entries are set to ``inf``).

    Raises
    ------
    UnidentifiableError
        If (without ``partial``) a parameter carries no information or the
        equilibrated condition number exceeds ``condition_cap``.
    """
    mat = np.asarray(matrix, dtype=float)
    mat = 0.5 * (mat + mat.T)
    # power-of-two normalisation is exact, so FIM(c*I) for c = 2**k inverts bit-for-bit
    top = np.max(np.abs(np.diag(mat)), initial=0.0)
    exponent = int(np.frexp(top)[1]) if np.isfinite(top) and top > 0 else 0
    mat = np.ldexp(mat, -exponent)
    diag = np.diag(mat).copy()
    dead = ~(diag > 0)
    if dead.any() and not partial:
        names = [labels[i] for i in np.flatnonzero(dead)]
        raise UnidentifiableError(f"no information on {', '.join(names)}",
                                  {name: 1.0 for name in names})
    diag[dead] = 1.0
    scale = 1.0 / np.sqrt(diag)
    eq = mat * scale[:, None] * scale[None, :]
    evals, evecs = np.linalg.eigh(eq)
    cond = float(evals[-1] / evals[0]) if evals[0] > 0 else np.inf
    unidentified: tuple = ()
    if cond > condition_cap:
        if not partial:
            text, combo = _describe(evecs[:, 0], labels)
            raise UnidentifiableError(f"unidentifiable combination {text} (condition {cond:.3g})",
                                      combo, cond)
        keep = evals > evals[-1] / condition_cap
        touched = np.any(np.abs(evecs[:, ~keep]) > 1e-6, axis=1) | dead
        unidentified = tuple(labels[i] for i in np.flatnonzero(touched))
        inv = (evecs[:, keep] / evals[keep]) @ evecs[:, keep].T
    else:
        try:
            inv = linalg.cho_solve(linalg.cho_factor(eq, lower=True), np.eye(eq.shape[0]))
        except linalg.LinAlgError:
            keep = evals > PINV_CUTOFF * evals[-1]
            inv = (evecs[:, keep] / evals[keep]) @ evecs[:, keep].T
    inv = np.ldexp(inv * scale[:, None] * scale[None, :], -exponent)
    inv = 0.5 * (inv + inv.T)
    for i, label in enumerate(labels):
        if label in unidentified:
            inv[i, i] = np.inf
    return inv, cond, unidentified


def _resolve_mask(fim: FimMatrix, subset_mask):
    """Return ``(information, labels)`` after applying the mask.

    A mask over the state labels marks kept parameters (dropped ones are known).
    A mask over the channel labels of a two-stage FIM keeps only the selected
    measurements; the discarded ones are marginalised out before mapping.
    """
    if subset_mask is None:
        return fim.matrix, fim.labels, None
    mask = np.asarray(subset_mask, dtype=bool).reshape(-1)
    if mask.size == len(fim.labels):
        labels = tuple(l for l, k in zip(fim.labels, mask) if k)
        return fim.matrix[np.ix_(mask, mask)], labels, None
    if fim.channel is not None and mask.size == len(fim.channel.labels):
        cov_gamma, _, _ = invert_information(fim.channel.matrix, fim.channel.labels)
        kept_info, _, _ = invert_information(cov_gamma[np.ix_(mask, mask)],
                                             [l for l, k in zip(fim.channel.labels, mask) if k])
        jac = fim.jacobian[:, mask]
        info = jac @ kept_info @ jac.T
        return 0.5 * (info + info.T), fim.labels, mask
    raise ValueError(f"subset mask of length {mask.size} matches neither {len(fim.labels)} "
                     "state nor channel parameters")


def _block_bound(cov, labels, wanted):
    idx = [i for i, l in enumerate(labels) if l in wanted]
    if not idx:
        return 0.0
    return float(np.sqrt(max(sum(cov[i, i] for i in idx), 0.0)))


def crlb(fim: FimMatrix, subset_mask=None, condition_cap: float = DEFAULT_CONDITION_CAP,
         kappa_p: float | None = None, kappa_phi: float | None = None,
         partial: bool = False) -> BoundReport:
    """Invert the FIM and report PEB, OEB (rad), GDOP and per-parameter deviations.

    Parameters masked out of the state are treated as known and get a zero
    bound. The GDOP normalisers default to ``d_BM/sqrt(P)`` and ``1/sqrt(P)``.
    With ``partial`` an unidentifiable combination (for example yaw and roll
    at a pitch of 90 degrees) no longer raises: bounds of the parameters it
    involves become ``inf`` and the remaining ones stay exact.
    """
    info, labels, channel_mask = _resolve_mask(fim, subset_mask)
    cov, cond, unidentified = invert_information(info, labels, condition_cap, partial)
    peb = _block_bound(cov, labels, POSITION_LABELS)
    oeb = _block_bound(cov, labels, ORIENTATION_LABELS)
    sigmas = {l: float(np.sqrt(max(cov[i, i], 0.0))) for i, l in enumerate(labels)}
    notes = list(fim.warnings)
    if unidentified:
        notes.append(f"unidentifiable: {', '.join(unidentified)} (condition {cond:.3g})")
    if fim.channel is not None:
        ch = fim.channel
        keep = np.ones(len(ch.labels), bool) if channel_mask is None else channel_mask
        try:
            ch_cov, _, _ = invert_information(ch.matrix[np.ix_(keep, keep)],
                                              [l for l, k in zip(ch.labels, keep) if k])
            for l, v in zip([l for l, k in zip(ch.labels, keep) if k], np.diag(ch_cov)):
                sigmas.setdefault(l, float(np.sqrt(max(v, 0.0))))
        except UnidentifiableError as exc:
            notes.append(f"channel parameters: {exc}")
    sigma = np.sqrt(fim.noise_variance)
    kp = fim.bm_distance / np.sqrt(fim.power) if kappa_p is None else kappa_p
    kf = 1.0 / np.sqrt(fim.power) if kappa_phi is None else kappa_phi
    return BoundReport(peb=peb, oeb=oeb, gdop_position=peb / (sigma * kp),
                       gdop_orientation=oeb / (sigma * kf), per_parameter_sigmas=sigmas,
                       condition_number=cond, labels=labels, covariance=cov, mode=fim.mode,
                       warnings=tuple(notes))


def gdop(fim, sigma: float | None = None, kappa_p: float | None = None,
         kappa_phi: float | None = None):
    """``(GDOP_p, GDOP_phi) = (PEB/(sigma*kappa_p), OEB/(sigma*kappa_phi))``.

    ``fim`` may be a :class:`FimMatrix` or an existing :class:`BoundReport`;
    unset arguments fall back to the FIM's noise level, ``d_BM/sqrt(P)`` and
    ``1/sqrt(P)``.
    """
    if isinstance(fim, FimMatrix):
        report = crlb(fim)
        sigma = np.sqrt(fim.noise_variance) if sigma is None else sigma
        kappa_p = fim.bm_distance / np.sqrt(fim.power) if kappa_p is None else kappa_p
        kappa_phi = 1.0 / np.sqrt(fim.power) if kappa_phi is None else kappa_phi
    else:
        report = fim
        if sigma is None or kappa_p is None or kappa_phi is None:
            raise ValueError("sigma and both kappas are required when passing a BoundReport")
    return report.peb / (sigma * kappa_p), report.oeb / (sigma * kappa_phi)


class PhaseLinearizedFim:
    """FIM as a function of the RIS phases for a fixed geometry.

    Every derivative column is affine in the reflection coefficients
    ``omega = exp(1j*theta)``, so the derivatives are tabulated once and each
    evaluation only contracts the table with ``omega``.
    """

    def __init__(self, scenario: Scenario, mode: str = "auto", subcarriers=None):
        if scenario.ris is None:
            raise ValueError("phase-dependent FIM needs a RIS")
        self.mode = default_mode(scenario) if mode == "auto" else mode
        self.scenario = scenario
        n_ris = scenario.ris.element_count
        idx = np.arange(scenario.signal.subcarrier_count) if subcarriers is None else np.atleast_1d(subcarriers)
        self.subcarriers = idx
        fn = mean_derivatives_direct if self.mode == "direct" else mean_derivatives_two_stage
        unit = _unit_power(scenario)
        self._power = scenario.signal.power
        self._base = fn(unit, n=idx, ris_weights=np.zeros(n_ris))
        table = [fn(unit, n=idx, ris_weights=np.eye(n_ris)[r]) - self._base for r in range(n_ris)]
        self._table = np.stack(table, axis=-1)
        self._sigma2 = scenario.noise_variance
        self._meta = dict(subcarriers_accumulated=int(idx.size), noise_variance=self._sigma2,
                          power=scenario.signal.power,
                          bm_distance=float(np.linalg.norm(scenario.ms.pose.centroid
                                                           - scenario.bs.pose.centroid)))
        self._jac = None
        if self.mode == "two_stage":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SingularJacobianWarning)
                self._jac = jacobian_two_stage(scenario)

    def derivatives(self, phases) -> np.ndarray:
        """Mean derivatives at unit transmit power for the given phases."""
        omega = np.exp(1j * np.asarray(getattr(phases, "phases", phases), dtype=float))
        return self._base + self._table @ omega

    def fim(self, phases) -> FimMatrix:
        info = _information(self.derivatives(phases), self._sigma2, self._power)
        if self._jac is None:
            return FimMatrix(info, STATE_LABELS, mode="direct", **self._meta)
        channel = FimMatrix(info, self._jac.channel_labels, mode="channel", **self._meta)
        jac = self._jac.matrix
        mapped = jac @ info @ jac.T
        return FimMatrix(0.5 * (mapped + mapped.T), STATE_LABELS, mode="two_stage", channel=channel,
                         jacobian=jac, warnings=self._jac.warnings, **self._meta)
