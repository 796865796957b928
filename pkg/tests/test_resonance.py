import numpy as np
import pytest

from nlbandgap.errors import NoRootInRectangle
from nlbandgap.normal_form import detuning
from nlbandgap.resonance import (
    DEFAULT_RECT,
    boundary_crossings,
    boundary_detuning,
    crossings_to_rows,
    curves_to_rows,
    k_detuning,
    trace_k_resonant_curves,
    trace_x_resonant_curve,
    x_curve_stiffness,
    x_detuning,
)
from nlbandgap.system import S_X, X_POINT, HoneycombParams, ModalData, boundary_point, honeycomb_modal

POINTS = {"A": (0.146, 2.0), "B": (0.146, 3.6), "C": (0.146, 5.0), "D": (0.146, 5.73), "E": (0.146, 10.79)}
COUNTS = {"A": 4, "B": 6, "C": 4, "D": 3, "E": 2}


@pytest.fixture(scope="module")
def x_curve():
    return trace_x_resonant_curve()


def test_detuning_examples():
    assert detuning(ModalData(1.0, 3.0, np.eye(2))) == 0
    assert detuning(ModalData(1.0, 2.0, np.eye(2))) == -1
    md = honeycomb_modal(X_POINT, HoneycombParams(0.146, 5.73))
    assert abs(detuning(md)) < 0.02 * md.omega_plus


def test_x_detuning_matches_modal_pipeline():
    for m, k in [(0.09, 8.0), (0.2, 3.0), (0.146, 5.73)]:
        md = honeycomb_modal(X_POINT, HoneycombParams(m, k))
        assert x_detuning(m, k) == pytest.approx(md.omega_plus - 3 * md.omega_minus, abs=1e-12)


def test_x_curve_passes_point_d(x_curve):
    pts = x_curve.points
    assert np.max(np.abs(x_detuning(pts[:, 0], pts[:, 1]))) <= 1e-10
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert np.all(steps <= 0.05 * (1 + 1e-9))
    k_on = x_curve_stiffness(0.146)
    assert abs(k_on - 5.73) <= 0.05
    # the polyline itself, interpolated at M = 0.146
    order = np.argsort(pts[:, 0])
    k_interp = np.interp(0.146, pts[order, 0], pts[order, 1])
    assert abs(k_interp - 5.73) <= 0.05


def test_x_curve_separates_rectangle():
    sa = x_detuning(*POINTS["A"])
    se = x_detuning(*POINTS["E"])
    assert np.sign(sa) != np.sign(se)
    rng = np.random.default_rng(1)
    m = rng.uniform(*DEFAULT_RECT[0], 200)
    k = rng.uniform(*DEFAULT_RECT[1], 200)
    above = k > np.array([x_curve_stiffness(mi) for mi in m])
    sig = x_detuning(m, k)
    assert np.all(sig[above] < 0) and np.all(sig[~above] > 0)


def test_x_curve_no_root():
    with pytest.raises(NoRootInRectangle):
        trace_x_resonant_curve(((0.05, 0.3), (15.0, 20.0)))


@pytest.mark.parametrize("name", list(POINTS))
def test_crossing_counts(name):
    p = HoneycombParams(*POINTS[name])
    cr = boundary_crossings(p)
    # a tangency counts once
    assert len(cr) == COUNTS[name]
    assert list(cr.s) == sorted(cr.s)
    for c in cr:
        md = honeycomb_modal(c.k, p)
        assert abs(md.omega_plus - 3 * md.omega_minus) <= 1e-9 * md.omega_plus


def test_point_d_touches_x():
    cr = boundary_crossings(HoneycombParams(*POINTS["D"]))
    at_x = [c for c in cr if abs(c.s - S_X) < 1e-3]
    assert len(at_x) == 1 and at_x[0].multiplicity == 2


def test_boundary_detuning_is_lipschitz():
    p = HoneycombParams(*POINTS["B"])
    s = np.linspace(0, 1, 20001)
    v = boundary_detuning(s, p)
    slopes = np.abs(np.diff(v)) / np.diff(s)
    assert np.max(slopes) < 1e3


def test_k_detuning_floor_at_gamma():
    p = HoneycombParams(0.09, 8)
    assert k_detuning(0.0, 0.0, p) > 0


@pytest.mark.parametrize("name,expected", [("A", 2), ("E", 1)])
def test_k_plane_component_counts(name, expected):
    p = HoneycombParams(*POINTS[name])
    curves = trace_k_resonant_curves(p)
    assert len(curves) == expected
    for c in curves:
        assert np.max(np.abs(k_detuning(c.points[:, 0], c.points[:, 1], p))) <= 1e-10


def test_csv_rows():
    p = HoneycombParams(*POINTS["A"])
    rows = list(crossings_to_rows(boundary_crossings(p)))
    assert len(rows) == 4 and all(len(r) == 4 for r in rows)
    k1, k2 = boundary_point(rows[0][0])
    assert (rows[0][1], rows[0][2]) == (k1, k2)
    curve_rows = list(curves_to_rows(trace_k_resonant_curves(p, grid=120)))
    assert {r[2] for r in curve_rows} == {0, 1}
