import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import channel_mean, column_error, five_point, random_scenario
from risloc.bounds import (
    CHANNEL_LABELS,
    STATE_LABELS,
    FimMatrix,
    PhaseLinearizedFim,
    SingularJacobianWarning,
    UnidentifiableError,
    angle_gradients,
    angle_gradients_from_coordinates,
    assemble_fim,
    channel_parameters,
    channel_response,
    crlb,
    g2_gradient,
    gdop,
    jacobian_two_stage,
    mean_derivatives_direct,
    mean_derivatives_two_stage,
)
from risloc.geometry import centroid_link
from risloc.scenario import SignalConfig, default_scenario
from risloc.signal_model import response

seeds = st.integers(0, 2**32 - 1)


def _fd_direct(scen, phases, j, h=1e-5):
    e = np.zeros(6)
    e[j] = 1.0
    state = scen.ms_state
    return five_point(lambda t: response(scen.with_ms_state(state + t * e), phases).mu, h)


@pytest.mark.parametrize("synchronous", [True, False])
def test_direct_derivatives_match_finite_differences(synchronous):
    rng = np.random.default_rng(21 if synchronous else 22)
    for _ in range(4):
        scen = random_scenario(rng, synchronous)
        phases = rng.uniform(0, 2 * np.pi, scen.ris.element_count)
        analytic = mean_derivatives_direct(scen, phases)
        for j in range(6):
            assert column_error(_fd_direct(scen, phases, j), analytic[..., j]) < 1e-5


@pytest.mark.parametrize("synchronous", [True, False])
def test_two_stage_derivatives_match_finite_differences(synchronous):
    rng = np.random.default_rng(31 if synchronous else 32)
    scen = random_scenario(rng, synchronous)
    phases = rng.uniform(0, 2 * np.pi, scen.ris.element_count)
    gamma = channel_parameters(scen)
    analytic = mean_derivatives_two_stage(scen, phases)
    for j, label in enumerate(CHANNEL_LABELS):
        h = {"rho": 1e-4 * gamma[label], "tau": 1e-13}.get(label[:3], 1e-5)

        def f(t, label=label):
            g = dict(gamma)
            g[label] = gamma[label] + t
            return channel_mean(scen, g, phases)

        assert column_error(five_point(f, h), analytic[..., j]) < 1e-5, label


@pytest.mark.parametrize("synchronous", [True, False])
def test_channel_response_reproduces_mean(synchronous):
    scen = random_scenario(np.random.default_rng(5), synchronous)
    phases = np.linspace(0, 3, scen.ris.element_count)
    gamma = channel_parameters(scen)
    got = channel_response(scen, gamma, phases)
    np.testing.assert_allclose(got, response(scen, phases).mu, rtol=1e-12)
    np.testing.assert_allclose(got, channel_mean(scen, gamma, phases), rtol=1e-10)


def test_jacobian_matches_finite_differences():
    scen = random_scenario(np.random.default_rng(6))
    jac = jacobian_two_stage(scen).matrix
    state = scen.ms_state
    for i in range(6):
        e = np.zeros(6)
        e[i] = 1.0

        def f(t):
            g = channel_parameters(scen.with_ms_state(state + t * e))
            return np.array([g[l] for l in CHANNEL_LABELS])

        np.testing.assert_allclose(five_point(f, 1e-5), jac[i], rtol=1e-7,
                                   atol=1e-9 * np.abs(jac[i]).max())


@given(seeds)
def test_g2_kernel_forms_agree(seed):
    rng = np.random.default_rng(seed)
    rx, tx = rng.normal(size=(4, 3)) * 0.05, rng.normal(size=(3, 3)) * 0.05
    target = rng.uniform(1, 5, 3) * rng.choice([-1, 1], 3)
    link = centroid_link(np.zeros(3), target)
    expanded = g2_gradient(rx, tx, link)
    np.testing.assert_allclose(expanded, g2_gradient(rx, tx, link, expanded=False), atol=1e-12)
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0

        def g2(t):
            u = centroid_link(np.zeros(3), target + t * e).direction
            return (tx @ u)[None, :] - (rx @ u)[:, None]

        np.testing.assert_allclose(five_point(g2, 1e-5), expanded[..., k], atol=1e-10)


@given(seeds)
def test_angle_gradient_forms_agree(seed):
    rng = np.random.default_rng(seed)
    tx = rng.uniform(0.5, 5, 3) * rng.choice([-1, 1], 3)
    closed = angle_gradients(centroid_link(np.zeros(3), tx))
    coords = angle_gradients_from_coordinates(np.zeros(3), tx)
    for a, b in zip(closed, coords):
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
    assert closed[1][2] == 0.0


def test_azimuth_gradient_on_x_axis():
    _, grad_phi = angle_gradients(centroid_link(np.zeros(3), [4.0, 0, 0]))
    np.testing.assert_allclose(grad_phi, [0, 0.25, 0], atol=1e-15)


@pytest.mark.parametrize("synchronous", [True, False])
@given(seed=seeds)
def test_fim_symmetric_psd(synchronous, seed):
    scen = random_scenario(np.random.default_rng(seed), synchronous)
    for mode in ("direct", "two_stage"):
        m = assemble_fim(scen, None, mode).matrix
        np.testing.assert_array_equal(m, m.T)
        assert np.linalg.eigvalsh(m).min() >= -1e-9 * np.abs(m).max()


def test_two_stage_equals_direct_when_synchronous():
    scen = random_scenario(np.random.default_rng(8), True)
    a = assemble_fim(scen, None, "direct").matrix
    b = assemble_fim(scen, None, "two_stage").matrix
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-8 * np.abs(a).max())


def _good_scenario(**kwargs):
    return default_scenario((0, 0, 0), (4, 2, -2, 0.3, 0.2, 0.1), (3, 3, -0.5), bs_elements=16,
                            ms_elements=4, ris_elements=16, subcarrier_count=4, **kwargs)


def _scaled_reports(scen, factor):
    strong = scen.replace(signal=SignalConfig(power=factor, subcarrier_count=4))
    noisy = scen.replace(sigma2=factor * scen.noise_variance)
    return crlb(assemble_fim(scen)), crlb(assemble_fim(strong)), crlb(assemble_fim(noisy))


@pytest.mark.parametrize("exponent", [-3, 1, 5])
def test_power_of_two_scaling_is_exact(exponent):
    factor = 2.0**exponent
    base, strong, noisy = _scaled_reports(_good_scenario(), factor)
    assert strong.peb == pytest.approx(base.peb / np.sqrt(factor), rel=1e-14)
    assert noisy.peb == pytest.approx(base.peb * np.sqrt(factor), rel=1e-14)
    assert strong.gdop_position == pytest.approx(base.gdop_position, rel=1e-14)


@given(st.floats(0.01, 100))
def test_power_and_noise_scaling(factor):
    base, strong, noisy = _scaled_reports(_good_scenario(), factor)
    assert strong.peb == pytest.approx(base.peb / np.sqrt(factor), rel=1e-7)
    assert noisy.peb == pytest.approx(base.peb * np.sqrt(factor), rel=1e-7)
    assert strong.gdop_orientation == pytest.approx(base.gdop_orientation, rel=1e-7)


def test_known_parameters_never_hurt():
    fim = assemble_fim(_good_scenario())
    full = crlb(fim)
    known_orientation = crlb(fim, [True] * 3 + [False] * 3)
    assert known_orientation.peb <= full.peb
    assert known_orientation.oeb == 0.0
    assert known_orientation.per_parameter_sigmas["x_M"] <= full.per_parameter_sigmas["x_M"]


def test_discarding_measurements_never_helps():
    fim = assemble_fim(_good_scenario(), mode="two_stage")
    full = crlb(fim)
    keep = [l not in ("tau_BM", "tau_RM") for l in CHANNEL_LABELS]
    reduced = crlb(fim, keep)
    assert reduced.peb >= full.peb * (1 - 1e-9)
    np.testing.assert_allclose(crlb(fim, [True] * len(CHANNEL_LABELS)).peb, full.peb, rtol=1e-8)


def test_single_antenna_ms_has_no_orientation_information():
    scen = default_scenario((0, 0, 0), (4, 2, -2, 0.3, 0.2, 0.1), (3, 3, -0.5), ms_elements=1,
                            subcarrier_count=4)
    fim = assemble_fim(scen, mode="direct")
    assert np.all(fim.matrix[3:, :] == 0) and np.all(fim.matrix[:, 3:] == 0)
    with pytest.raises(UnidentifiableError):
        crlb(fim)
    assert np.isfinite(crlb(fim, [True] * 3 + [False] * 3).peb)


def test_diagonal_information_example():
    fim = FimMatrix(np.diag([1.0, 4.0, 16.0, 100.0, 400.0, 2500.0]), STATE_LABELS, 1, "direct",
                    noise_variance=0.25, power=4.0, bm_distance=3.0)
    report = crlb(fim)
    assert report.peb == pytest.approx(np.sqrt(1 + 1 / 4 + 1 / 16))
    assert report.oeb == pytest.approx(np.sqrt(1 / 100 + 1 / 400 + 1 / 2500))
    assert report.per_parameter_sigmas["y_M"] == pytest.approx(0.5)
    # sigma = 0.5, kappa_p = 3/2, kappa_phi = 1/2
    assert report.gdop_position == pytest.approx(report.peb / 0.75)
    assert gdop(fim) == pytest.approx((report.peb / 0.75, report.oeb / 0.25))


def test_gdop_identity():
    scen = _good_scenario()
    fim = assemble_fim(scen)
    report = crlb(fim)
    sigma = np.sqrt(scen.noise_variance)
    kappa_p = np.linalg.norm(scen.ms.pose.centroid) / np.sqrt(scen.signal.power)
    assert sigma * kappa_p * report.gdop_position == pytest.approx(report.peb, rel=1e-12)


def test_unidentifiable_error_names_the_combination():
    info = np.diag([1.0, 1.0, 1.0, 1.0, 1.0, 0.0])
    fim = FimMatrix(info, STATE_LABELS, 1, "direct", 1.0, 1.0, 1.0)
    with pytest.raises(UnidentifiableError) as err:
        crlb(fim)
    assert "gamma_M" in str(err.value)


def test_partial_inverse_at_gimbal_lock():
    scen = default_scenario((5, 0, 1.5), (5, 5, 1, np.pi / 4, np.pi / 2, 0), (0, 5, 2),
                            bs_elements=16, ris_elements=16, subcarrier_count=4, synchronous=False)
    fim = assemble_fim(scen)
    with pytest.raises(UnidentifiableError):
        crlb(fim)
    report = crlb(fim, partial=True)
    assert np.isfinite(report.peb) and np.isinf(report.oeb)
    assert report.per_parameter_sigmas["beta_M"] < np.inf
    assert np.isinf(report.per_parameter_sigmas["alpha_M"])
    known = crlb(fim, [True, True, True, True, True, False])
    assert report.peb == pytest.approx(known.peb, rel=1e-3)


def test_vertical_link_warns():
    scen = default_scenario((0, 0, 0), (0, 0, -3, 0, 0, 0), (3, 3, -0.5), subcarrier_count=2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fim = assemble_fim(scen, mode="two_stage")
    assert any(issubclass(w.category, SingularJacobianWarning) for w in caught)
    assert fim.warnings


def test_phase_linearized_fim_matches_assembly():
    rng = np.random.default_rng(9)
    scen = random_scenario(rng, True)
    phases = rng.uniform(0, 2 * np.pi, scen.ris.element_count)
    for mode in ("direct", "two_stage"):
        lin = PhaseLinearizedFim(scen, mode).fim(phases).matrix
        ref = assemble_fim(scen, phases, mode).matrix
        np.testing.assert_allclose(lin, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())
