import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlbandgap.errors import Blowup, EnergyDrift, PreconditionFail, SingularActionAngle, SpectralAmbiguity
from nlbandgap.normal_form import (
    admissible_amplitudes,
    build_normal_form,
    nonlinear_frequencies,
)
from nlbandgap.simulator import (
    AsymptoticSolution,
    GeneratingFlow,
    action_angle,
    action_angle_roundtrip,
    composition_weights,
    dominant_frequency,
    from_complex,
    hamiltonian,
    integrate_full,
    integrate_truncated,
    measure_frequencies,
    measure_nonlinear_frequencies,
    to_complex,
    verify_remainder,
)
from nlbandgap.system import X_POINT, HoneycombParams, OscillatorSystem, build_honeycomb, modal_decomposition

REF = HoneycombParams(0.09, 8.0, cubic=-1e4)


@pytest.fixture(scope="module")
def instance():
    system = build_honeycomb(X_POINT, REF)
    modal = modal_decomposition(system)
    nf = build_normal_form(modal, 0.0, REF.cubic)
    adm = admissible_amplitudes(modal, nf.s_star)
    return system, modal, nf, (adm.a_minus, adm.a_plus)


# ------------------------------------------------------------------ integrator

@pytest.mark.parametrize("order", [2, 4, 6, 8])
def test_composition_weights_consistent(order):
    w = composition_weights(order)
    assert sum(w) == pytest.approx(1.0, abs=1e-14)
    assert w == w[::-1]


def test_linear_oscillator_is_cosine():
    sys_ = OscillatorSystem(np.eye(2), np.diag([1.0, 4.0]))
    traj = integrate_full(sys_, (1.0, 0.0), (0.0, 0.0), 100.0, 0.01)
    assert np.max(np.abs(traj.states[:, 0] - np.cos(traj.times))) < 1e-8
    assert np.max(np.abs(traj.states[:, 1])) == 0.0


def test_reversibility(instance):
    system, _, _, amps = instance
    fwd = integrate_full(system, amps, (0.0, 0.0), 20.0)
    q, p = fwd.states[-1, :2], fwd.states[-1, 2:]
    back = integrate_full(system, q, -p, 20.0, fwd.dt)
    np.testing.assert_allclose(back.states[-1, :2], amps, atol=1e-8)
    np.testing.assert_allclose(back.states[-1, 2:], (0.0, 0.0), atol=1e-8)


@pytest.mark.parametrize("order", [2, 4, 6])
def test_convergence_order(instance, order):
    system, _, _, amps = instance
    q0 = tuple(2 * a for a in amps)
    ref = integrate_full(system, q0, (0, 0), 2.0, 1e-3, order=8).states[-1]
    errs = []
    for dt in (0.02, 0.01):
        errs.append(np.max(np.abs(integrate_full(system, q0, (0, 0), 2.0, dt, order=order, energy_tol=None).states[-1] - ref)))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.7)


def test_energy_gate(instance):
    system, _, _, amps = instance
    traj = integrate_full(system, amps, (0.0, 0.0), 50.0)
    assert traj.relative_drift <= 1e-9
    with pytest.raises(EnergyDrift):
        integrate_full(system, tuple(2 * a for a in amps), (0.0, 0.0), 5.0, 0.05, order=2)


def test_blowup():
    system = build_honeycomb(X_POINT, REF)
    with pytest.raises(Blowup), np.errstate(over="ignore", invalid="ignore"):
        integrate_full(system, (1.0, 1.0), (0.0, 0.0), 10.0, energy_tol=None)


def test_bounded_at_admissible_amplitude(instance):
    system, modal, _, amps = instance
    traj = integrate_full(system, amps, (0.0, 0.0), 1000.0, output_every=64)
    assert traj.relative_drift <= 1e-9
    z = to_complex(modal, traj.states[:, :2], traj.states[:, 2:])
    z0 = to_complex(modal, amps, (0.0, 0.0))
    assert np.max(np.abs(z)) <= 2 * np.max(np.abs(z0))


def test_action_drift_scales_quadratically(instance):
    system, modal, _, amps = instance
    drifts = []
    for frac in (1.0, 0.5):
        q0 = tuple(frac * a for a in amps)
        traj = integrate_full(system, q0, (0.0, 0.0), 200.0, output_every=4)
        act = np.abs(to_complex(modal, traj.states[:, :2], traj.states[:, 2:])) ** 2
        drifts.append(np.max(np.abs(act - act[0]) / act[0]))
    eps2 = np.max(np.abs(to_complex(modal, amps, (0, 0)))) ** 2
    assert drifts[0] <= 10 * eps2 * build_normal_form(modal, 0, REF.cubic).s_star
    assert math.log2(drifts[0] / drifts[1]) == pytest.approx(2.0, abs=0.5)


def test_hamiltonian_and_coordinates(instance):
    _, modal, _, amps = instance
    z = to_complex(modal, amps, (0.1, -0.2))
    q, p = from_complex(modal, z)
    np.testing.assert_allclose(q, amps, rtol=1e-15)
    np.testing.assert_allclose(p, (0.1, -0.2), rtol=1e-15)
    # quadratic part equals w . |z|^2
    h = hamiltonian(modal, 0.0, 0.0, [*amps, 0.1, -0.2])[0]
    assert h == pytest.approx(float(np.dot(modal.omega, np.abs(z) ** 2)), rel=1e-14)


# ------------------------------------------------------------ truncated flow

def test_truncated_flow(instance):
    _, modal, nf, _ = instance
    i0, phi0 = (2e-6, 1e-6), (0.3, 1.1)
    traj = integrate_truncated(modal, nf, i0, phi0, 5.0)
    z = to_complex(modal, traj.states[:, :2], traj.states[:, 2:])
    acts, angles = action_angle(z[-1])
    np.testing.assert_allclose(acts, i0, rtol=1e-12)
    rates = nonlinear_frequencies(modal, 0.0, REF.cubic, *i0)
    expected = np.mod(np.array(phi0) + np.array(rates) * traj.times[-1], 2 * math.pi)
    np.testing.assert_allclose(angles, expected, atol=1e-9)


def test_truncated_flow_linear():
    modal = modal_decomposition(build_honeycomb(X_POINT, HoneycombParams(0.09, 8.0)))
    nf = build_normal_form(modal, 0.0, 0.0)
    traj = integrate_truncated(modal, nf, (1.0, 1.0), (0.0, 0.0), 1.0)
    z = to_complex(modal, traj.states[-1, :2], traj.states[-1, 2:])
    _, angles = action_angle(z)
    np.testing.assert_allclose(angles, np.mod(np.array(modal.omega) * traj.times[-1], 2 * math.pi), atol=1e-12)


def test_truncated_rejects_resonant(instance):
    _, modal, _, _ = instance
    with pytest.raises(ValueError):
        integrate_truncated(modal, build_normal_form(modal, 0.0, REF.cubic, True), (1, 1), (0, 0), 1.0)


# ---------------------------------------------------------------- spectrum

def test_pure_cosine_frequency():
    t = np.arange(0, 500, 0.01)
    assert dominant_frequency(np.cos(t), 0.01) == pytest.approx(1.0, abs=1e-5)


def test_spectral_ambiguity():
    t = np.arange(0, 500, 0.01)
    with pytest.raises(SpectralAmbiguity):
        dominant_frequency(np.cos(t) + 0.9 * np.cos(1.5 * t), 0.01)


def test_linear_honeycomb_frequencies():
    system = build_honeycomb(X_POINT, HoneycombParams(0.09, 8.0))
    modal = modal_decomposition(system)
    traj = integrate_full(system, (1e-3, 1e-3), (0, 0), 100 * 2 * math.pi / modal.omega_minus)
    wm, wp = measure_frequencies(traj)
    assert wm == pytest.approx(modal.omega_minus, abs=1e-5)
    assert wp == pytest.approx(modal.omega_plus, abs=1e-5)


def test_frequency_shift_scales_with_amplitude_squared(instance):
    system, modal, _, amps = instance
    fracs = (1.0, 0.5, 0.25)
    shifts = []
    for f in fracs:
        wm, _, _ = measure_nonlinear_frequencies(system, (f * amps[0], f * amps[1]), (0.0, 0.0))
        shifts.append(abs(wm - modal.omega_minus))
    slope = np.polyfit(np.log(fracs), np.log(shifts), 1)[0]
    assert 1.9 <= slope <= 2.1


# ------------------------------------------------------------- action-angle

def test_action_angle_examples():
    z = np.array([1.0 + 0j, 1.0 + 0j])
    np.testing.assert_allclose(action_angle_roundtrip(z), z, atol=1e-14)
    with pytest.raises(SingularActionAngle):
        action_angle(np.array([1e-30, 1.0]))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_action_angle_roundtrip_property(r1, r2, a1, a2):
    z = np.array([r1 * np.exp(1j * a1), r2 * np.exp(1j * a2)])
    assert np.max(np.abs(action_angle_roundtrip(z) - z)) <= 1e-14 * max(r1, r2) * 4


# --------------------------------------------------------- coordinate change

def test_generating_flow_near_identity(instance):
    _, _, nf, _ = instance
    flow = GeneratingFlow(nf.s)
    rng = np.random.default_rng(2)
    r = 2 / (9 * math.sqrt(3 * nf.s_star))
    for _ in range(50):
        w = rng.normal(size=2) + 1j * rng.normal(size=2)
        w *= r * rng.random() / np.max(np.abs(w))
        assert np.max(np.abs(flow.forward(w) - w)) <= nf.s_star * r**3
        np.testing.assert_allclose(flow.inverse(flow.forward(w)), w, atol=1e-12 * r)


def _remainder(modal, nf, flow, w):
    z = flow.forward(w)
    q, p = from_complex(modal, z)
    h = hamiltonian(modal, 0.0, REF.cubic, np.concatenate([q, p]))[0]
    n = modal.omega_minus * abs(w[0]) ** 2 + modal.omega_plus * abs(w[1]) ** 2
    return h - n - nf.h4(w).real


def test_remainder_gradient_cauchy_bound(instance):
    _, modal, nf, _ = instance
    flow = GeneratingFlow(nf.s)
    rng = np.random.default_rng(4)
    eps = 2 / (9 * math.sqrt(3 * nf.s_star))
    for _ in range(30):
        w = rng.normal(size=2) + 1j * rng.normal(size=2)
        w *= eps * rng.random() / np.max(np.abs(w))
        h = 1e-2 * eps
        grad = []
        for j in range(2):
            e = np.zeros(2, complex)
            e[j] = h
            dx = (_remainder(modal, nf, flow, w + e) - _remainder(modal, nf, flow, w - e)) / (2 * h)
            dy = (_remainder(modal, nf, flow, w + 1j * e) - _remainder(modal, nf, flow, w - 1j * e)) / (2 * h)
            grad.append(0.5 * abs(dx - 1j * dy))
        assert max(grad) <= nf.r_star * eps**5


def test_remainder_is_sixth_order(instance):
    _, modal, nf, _ = instance
    flow = GeneratingFlow(nf.s)
    w = np.array([1.0 + 0.5j, -0.3 + 0.8j])
    scale = 2 / (9 * math.sqrt(3 * nf.s_star)) / np.max(np.abs(w))
    r1 = _remainder(modal, nf, flow, w * scale)
    r2 = _remainder(modal, nf, flow, w * scale / 2)
    assert math.log2(abs(r1 / r2)) == pytest.approx(6.0, abs=0.3)


# ----------------------------------------------------------------- remainder

def test_verify_remainder_half_admissible(instance):
    system, modal, nf, amps = instance
    rep = verify_remainder(system, modal, nf, (0.5 * amps[0], 0.5 * amps[1]), (0.0, 0.0), 1e4)
    assert rep.passed
    assert rep.norm_violations == 0 and rep.residual_violations == 0
    assert rep.max_norm_ratio <= rep.norm_bound
    assert rep.t_star == pytest.approx(3 * rep.xi**2 / (2 * rep.r_star), rel=1e-15)
    assert rep.horizon == pytest.approx(min(1e4, rep.t_star * rep.epsilon**-4), rel=1e-15)
    assert rep.energy_drift <= 1e-9


def test_t_star_quarters_with_half_xi(instance):
    _, _, nf, _ = instance
    sol = AsymptoticSolution.from_initial(np.array([1e-3, 1e-3]), nf)
    half = AsymptoticSolution.from_initial(np.array([1e-3, 5e-4]), nf)
    assert half.xi == pytest.approx(sol.xi / 2, rel=1e-14)
    t_star = lambda xi: 3 * xi**2 / (2 * nf.r_star)
    assert t_star(half.xi) == pytest.approx(t_star(sol.xi) / 4, rel=1e-14)


def test_verify_remainder_linear():
    system = build_honeycomb(X_POINT, HoneycombParams(0.09, 8.0))
    modal = modal_decomposition(system)
    nf = build_normal_form(modal, 0.0, 0.0)
    rep = verify_remainder(system, modal, nf, (1e-3, 1e-3), (0.0, 0.0), 20.0)
    assert rep.passed and rep.r_star == 0
    # rounding only
    assert max(r for _, r, _ in rep.residuals) < 1e-11 * rep.epsilon


def test_verify_remainder_preconditions(instance):
    system, modal, nf, amps = instance
    with pytest.raises(PreconditionFail):
        verify_remainder(system, modal, nf, (2 * amps[0], 2 * amps[1]), (0.0, 0.0), 1.0)
    with pytest.raises(PreconditionFail):
        verify_remainder(system, modal, nf, (0.0, 0.0), (0.0, 0.0), 1.0)
