import dataclasses

import numpy as np
import pytest

from nlbandgap.bandgap import (
    ADMISSIBLE,
    PER_K_ADMISSIBLE,
    AmplitudePolicy,
    FixedAmplitudes,
    bandgap_sweep,
    boundary_profile,
    classify_parameters,
    linear_bandgap,
    nonlinear_bandgap,
    x_admissible_amplitudes,
)
from nlbandgap.errors import AllExcluded
from nlbandgap.normal_form import admissible_amplitudes, build_normal_form
from nlbandgap.system import GAMMA, S_X, X_POINT, HoneycombParams, honeycomb_frequencies, honeycomb_modal

REF = HoneycombParams(0.09, 8.0, cubic=-1e4)


@pytest.fixture(scope="module")
def softening():
    return nonlinear_bandgap(REF)


def vertex_width(p):
    wp_gamma = float(honeycomb_frequencies(0.0, 0.0, p)[1])
    return wp_gamma - honeycomb_modal(X_POINT, p).omega_minus


# -------------------------------------------------------------------- linear

def test_linear_width_from_vertices():
    lin = linear_bandgap(REF)
    assert lin.width == pytest.approx(vertex_width(REF), abs=1e-14)
    assert lin.width == pytest.approx(0.990354451097609, rel=1e-13)
    assert lin.argmax_acoustic == pytest.approx(tuple(X_POINT), abs=1e-12)
    assert lin.argmin_optical == pytest.approx(tuple(GAMMA), abs=1e-12)


def test_linear_width_converged():
    assert abs(linear_bandgap(REF, 4096).width - linear_bandgap(REF, 2048).width) < 1e-8


def test_linear_extremizers_at_vertices_over_rectangle():
    ms = np.linspace(0.05, 0.3, 6)
    ks = np.linspace(1, 20, 6)
    hits = 0
    for m in ms:
        for k in ks:
            lin = linear_bandgap(HoneycombParams(m, k), 512)
            hits += abs(lin.s_max - S_X) < 1e-6 and min(lin.s_min, 1 - lin.s_min) < 1e-6
            assert lin.width > 0
    assert hits >= 0.99 * ms.size * ks.size


# ---------------------------------------------------------------- amplitudes

def test_x_admissible_policy_matches_normal_form():
    md = honeycomb_modal(X_POINT, REF)
    nf = build_normal_form(md, 0.0, REF.cubic)
    a = admissible_amplitudes(md, nf.s_star)
    fixed = x_admissible_amplitudes(REF)
    assert (fixed.a_minus, fixed.a_plus) == pytest.approx((a.a_minus, a.a_plus), rel=1e-13)
    assert fixed.a_minus == pytest.approx(0.0015231286582746482, rel=1e-12)
    assert fixed.a_plus == pytest.approx(0.001055803615692477, rel=1e-12)


# ----------------------------------------------------------------- nonlinear

def test_softening_widens_gap(softening):
    assert softening.b_per > 0
    assert softening.b_per == pytest.approx(5.6270100137437495, rel=1e-9)
    assert softening.good


def test_hardening_shrinks_gap():
    r = nonlinear_bandgap(dataclasses.replace(REF, cubic=1e4))
    assert r.b_per < 0
    assert r.b_per == pytest.approx(-5.6270100137437495, rel=1e-9)


def test_linear_system_has_zero_gain():
    r = nonlinear_bandgap(dataclasses.replace(REF, cubic=0.0))
    assert r.b_per == 0 and r.w_nonlinear == r.w_linear
    assert r.resonant_exclusions == ()


def test_b_per_identity(softening):
    assert softening.b_per == 100.0 * (softening.w_nonlinear / softening.w_linear - 1.0)


def test_good_extremizers_outside_exclusions(softening):
    for s in (softening.s_max, softening.s_min):
        for lo, hi in softening.resonant_exclusions:
            assert not (lo <= s <= hi)
    assert softening.argmax_acoustic == pytest.approx(tuple(X_POINT), abs=1e-12)
    assert softening.argmin_optical == pytest.approx(tuple(GAMMA), abs=1e-12)


def test_exclusion_radius_robustness(softening):
    half = nonlinear_bandgap(REF, radius_scale=0.5)
    assert abs(half.w_nonlinear - softening.w_nonlinear) < 1e-10


def test_all_excluded():
    with pytest.raises(AllExcluded):
        nonlinear_bandgap(REF, radius_scale=1e4)


def test_monotone_amplitude_response():
    md = honeycomb_modal(X_POINT, REF)
    vals = []
    for a in (1e-4, 5e-4, 1e-3, 2e-3):
        prof, _ = boundary_profile(REF, FixedAmplitudes(a, 0.0), 64)
        vals.append(prof.omega_minus_nl[np.argmin(np.abs(prof.s - S_X))])
    assert all(np.diff(vals) < 0)
    assert vals[0] < md.omega_minus


def test_policies():
    assert ADMISSIBLE == AmplitudePolicy()
    per_k = nonlinear_bandgap(REF, PER_K_ADMISSIBLE)
    assert np.isfinite(per_k.b_per)
    fixed = nonlinear_bandgap(REF, FixedAmplitudes(0.002, 0.001))
    assert fixed.b_per > 0


@pytest.mark.parametrize("mk,good", [((0.09, 8.0), True), ((0.146, 5.73), False), ((0.146, 2.0), False)])
def test_classification(mk, good):
    assert classify_parameters(HoneycombParams(*mk, cubic=-1e4)) is good


# --------------------------------------------------------------------- sweep

def test_sweep_zero_nonlinearity():
    res = bandgap_sweep(grid=(3, 3), n3=0.0, n_samples=256, threads=1)
    assert np.all(res.b_per == 0)


def test_sweep_thread_independent():
    a = bandgap_sweep(grid=(3, 3), n_samples=256, threads=1)
    b = bandgap_sweep(grid=(3, 3), n_samples=256, threads=3)
    assert list(a.rows()) == list(b.rows())
    assert a.m_tilde.shape == (3, 3)
    assert a.m_tilde[2, 0] == 0.3 and a.k_tilde[0, 2] == 20.0
