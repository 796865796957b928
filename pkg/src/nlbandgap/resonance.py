"""3:1 resonance sets: the X-resonant curve, k-plane curves and boundary crossings.

The detuning ``sigma = w_plus - 3 w_minus`` is evaluated through the
closed-form modal solve, so every function here broadcasts over arrays and
is cheap enough for dense scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from skimage.measure import find_contours

from .errors import NoRootInRectangle
from .normal_form import detuning  # noqa: F401  (re-exported for convenience)
from .system import (
    M_POINT,
    SQRT3,
    X_POINT,
    HoneycombParams,
    WaveNumbers,
    boundary_point,
    boundary_samples,
    honeycomb_frequencies,
    honeycomb_mass,
    honeycomb_stiffness,
    modal_arrays,
)

DEFAULT_RECT = ((0.05, 0.3), (1.0, 20.0))
SIGMA_TOL_CURVE = 1e-10
SIGMA_TOL_ROOT = 1e-11
OMEGA_MINUS_FLOOR = 1e-8

__all__ = [
    "DEFAULT_RECT",
    "PlanarCurve",
    "Crossing",
    "BoundaryCrossings",
    "detuning",
    "x_detuning",
    "k_detuning",
    "boundary_detuning",
    "trace_x_resonant_curve",
    "trace_k_resonant_curves",
    "boundary_crossings",
    "x_curve_stiffness",
]


@dataclass(frozen=True)
class PlanarCurve:
    points: np.ndarray  # shape (n, 2)
    closed: bool = False

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Crossing:
    s: float
    k: WaveNumbers
    sigma: float
    multiplicity: int = 1


@dataclass(frozen=True)
class BoundaryCrossings:
    crossings: tuple[Crossing, ...]

    def __len__(self):
        return len(self.crossings)

    def __iter__(self):
        return iter(self.crossings)

    @property
    def s(self) -> np.ndarray:
        return np.array([c.s for c in self.crossings])


# --------------------------------------------------------------------------
# detuning maps
# --------------------------------------------------------------------------

def x_detuning(m_tilde, k_tilde, template: HoneycombParams | None = None):
    """``sigma`` at the vertex X as a function of ``(M, K)``; broadcasts."""
    template = template or HoneycombParams(0.1, 1.0)
    mh = honeycomb_mass(X_POINT.k1, X_POINT.k2)
    kh = honeycomb_stiffness(X_POINT.k1, X_POINT.k2, template)
    m_tilde = np.asarray(m_tilde, dtype=float)
    k_tilde = np.asarray(k_tilde, dtype=float)
    m11 = mh + m_tilde if template.mass_convention == "relative" else np.full_like(m_tilde, mh)
    wm, wp, _ = modal_arrays(m11, m_tilde, m_tilde, kh, k_tilde)
    out = wp - 3.0 * wm
    return out[()] if np.ndim(out) == 0 else out


def k_detuning(k1, k2, params: HoneycombParams):
    """``sigma`` over wave numbers at fixed parameters; ``+w_plus`` where ``w_minus`` vanishes."""
    wm, wp, _ = honeycomb_frequencies(k1, k2, params)
    out = np.where(wm < OMEGA_MINUS_FLOOR, wp, wp - 3.0 * wm)
    return out[()] if np.ndim(out) == 0 else out


def boundary_detuning(s, params: HoneycombParams):
    k1, k2 = boundary_point(s)
    return k_detuning(k1, k2, params)


def x_curve_stiffness(m_tilde: float, template: HoneycombParams | None = None,
                      k_range: tuple[float, float] = DEFAULT_RECT[1]) -> float:
    """The stiffness ``K`` with ``(m_tilde, K)`` on the X-resonant curve."""
    f = lambda k: float(x_detuning(m_tilde, k, template))
    lo, hi = k_range
    if f(lo) * f(hi) > 0:
        raise NoRootInRectangle(f"no X-resonant stiffness for M={m_tilde} in {k_range}")
    return brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


# --------------------------------------------------------------------------
# X-resonant curve in the (M, K) plane
# --------------------------------------------------------------------------

def _edge_roots(f, rect, n):
    """Sign changes of ``f`` on the rectangle boundary, refined by bisection."""
    (x0, x1), (y0, y1) = rect
    t = np.linspace(0.0, 1.0, n)
    edges = [
        lambda u: (x0 + u * (x1 - x0), y0),
        lambda u: (x1, y0 + u * (y1 - y0)),
        lambda u: (x1 - u * (x1 - x0), y1),
        lambda u: (x0, y1 - u * (y1 - y0)),
    ]
    roots = []
    for edge in edges:
        xs, ys = edge(t)
        vals = f(np.broadcast_to(xs, t.shape), np.broadcast_to(ys, t.shape))
        for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0):
            if vals[i] == 0 and i > 0:
                continue
            g = lambda u: float(f(*edge(u)))
            u = t[i] if vals[i] == 0 else brentq(g, t[i], t[i + 1], xtol=1e-15)
            roots.append(np.array(edge(u), dtype=float))
    # drop duplicates at corners
    uniq = []
    for r in roots:
        if all(np.linalg.norm(r - q) > 1e-12 for q in uniq):
            uniq.append(r)
    return uniq


def _gradient(f, p, h):
    dx = (f(p[0] + h[0], p[1]) - f(p[0] - h[0], p[1])) / (2 * h[0])
    dy = (f(p[0], p[1] + h[1]) - f(p[0], p[1] - h[1])) / (2 * h[1])
    return np.array([float(dx), float(dy)])


def _correct(f, q, normal, h):
    """Root of ``f`` on the line ``q + lam * normal`` closest to ``lam = 0``."""
    g = lambda lam: float(f(*(q + lam * normal)))
    g0 = g(0.0)
    if g0 == 0.0:
        return q
    width = 0.05 * h
    while width <= 4 * h:
        for sgn in (1.0, -1.0):
            if g0 * g(sgn * width) <= 0:
                lam = brentq(g, 0.0, sgn * width, xtol=1e-16, rtol=4 * np.finfo(float).eps)
                return q + lam * normal
        width *= 2.0
    return None


def _inside(p, rect, pad=0.0):
    (x0, x1), (y0, y1) = rect
    return x0 - pad <= p[0] <= x1 + pad and y0 - pad <= p[1] <= y1 + pad


def trace_x_resonant_curve(rect=DEFAULT_RECT, step: float = 0.05,
                           template: HoneycombParams | None = None,
                           scan: int = 400) -> PlanarCurve:
    """Continuation trace of ``{(M, K) : sigma(M, K, X) = 0}`` inside ``rect``.

    Starts at a sign change on the rectangle boundary and follows the zero
    set with a tangent predictor of arc length ``step`` and a normal-line
    bisection corrector, until the curve leaves the rectangle.
    """
    f = lambda x, y: x_detuning(x, y, template)
    rect = (tuple(map(float, rect[0])), tuple(map(float, rect[1])))
    (x0, x1), (y0, y1) = rect
    starts = _edge_roots(f, rect, scan)
    if not starts:
        xs, ys = np.meshgrid(np.linspace(x0, x1, scan), np.linspace(y0, y1, scan))
        vals = f(xs, ys)
        if np.all(vals > 0) or np.all(vals < 0):
            raise NoRootInRectangle(f"detuning at X has no sign change in {rect}")
        raise NoRootInRectangle("closed X-resonant components are not supported")

    fd = (1e-7 * max(1.0, x1 - x0), 1e-7 * max(1.0, y1 - y0))
    start = starts[0]
    pts = [start]
    g = _gradient(f, start, fd)
    tangent = np.array([-g[1], g[0]]) / np.hypot(*g)
    # orient into the rectangle
    if not _inside(start + 1e-6 * step * tangent, rect):
        tangent = -tangent
    p = start
    max_pts = int(10 * (abs(x1 - x0) + abs(y1 - y0)) / step) + 10
    while len(pts) < max_pts:
        h = step
        while True:
            q = p + h * tangent
            g = _gradient(f, q, fd)
            normal = g / np.hypot(*g)
            c = _correct(f, q, normal, h)
            if c is not None and np.linalg.norm(c - p) <= step * (1 + 1e-9):
                break
            h *= 0.5
            if h < 1e-9 * step:
                raise RuntimeError("continuation stalled")
        if not _inside(c, rect):
            # close with the boundary exit point nearest to the last inside point
            exits = [r for r in starts[1:] if np.linalg.norm(r - p) <= step * (1 + 1e-9)]
            if exits:
                pts.append(min(exits, key=lambda r: np.linalg.norm(r - p)))
            break
        g = _gradient(f, c, fd)
        new_t = np.array([-g[1], g[0]]) / np.hypot(*g)
        tangent = new_t if new_t @ tangent >= 0 else -new_t
        pts.append(c)
        p = c
    return PlanarCurve(np.array(pts), closed=False)


# --------------------------------------------------------------------------
# resonant curves in the k plane
# --------------------------------------------------------------------------

def _triangle_distance(k1, k2):
    """Euclidean distance from points to the closed Brillouin triangle (0 inside)."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    verts = [(0.0, 0.0), tuple(X_POINT), tuple(M_POINT)]
    inside = (k2 >= 0) & (k2 <= k1 / SQRT3) & (k2 <= SQRT3 * (X_POINT.k1 - k1))
    d = np.full(k1.shape, np.inf)
    for a, b in zip(verts, verts[1:] + verts[:1]):
        ax, ay = a
        bx, by = b
        ex, ey = bx - ax, by - ay
        t = np.clip(((k1 - ax) * ex + (k2 - ay) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
        d = np.minimum(d, np.hypot(k1 - ax - t * ex, k2 - ay - t * ey))
    return np.where(inside, 0.0, d)


def trace_k_resonant_curves(params: HoneycombParams, grid: int = 400, margin: float = 0.1,
                            touch_tol: float = 1e-9) -> list[PlanarCurve]:
    """Zero-set components of ``sigma(k1, k2)`` that meet the Brillouin triangle.

    Marching squares on a ``grid x grid`` lattice over the triangle's bounding
    box (enlarged by ``margin``), followed by bisection of every contour vertex
    along the lattice edge it sits on.
    """
    k1s = np.linspace(-margin, X_POINT.k1 + margin, grid)
    k2s = np.linspace(-margin, M_POINT.k2 + margin, grid)
    K1, K2 = np.meshgrid(k1s, k2s)  # rows index k2
    sigma = k_detuning(K1, K2, params)

    def edge_root(fixed_is_row, idx, lo, hi):
        if fixed_is_row:
            y = k2s[idx]
            g = lambda x: float(k_detuning(x, y, params))
            a, b = k1s[lo], k1s[hi]
            return brentq(g, a, b, xtol=1e-15), y
        x = k1s[idx]
        g = lambda y: float(k_detuning(x, y, params))
        a, b = k2s[lo], k2s[hi]
        return x, brentq(g, a, b, xtol=1e-15)

    curves = []
    for contour in find_contours(sigma, 0.0):
        pts = []
        for r, c in contour:
            ri, ci = round(r), round(c)
            if abs(r - ri) < 1e-9 and abs(c - ci) < 1e-9:
                pts.append((k1s[ci], k2s[ri]))
            elif abs(r - ri) < 1e-9:
                lo = int(math.floor(c))
                hi = min(lo + 1, grid - 1)
                pts.append(edge_root(True, ri, lo, hi) if sigma[ri, lo] * sigma[ri, hi] <= 0
                           else (np.interp(c, np.arange(grid), k1s), k2s[ri]))
            else:
                lo = int(math.floor(r))
                hi = min(lo + 1, grid - 1)
                pts.append(edge_root(False, ci, lo, hi) if sigma[lo, ci] * sigma[hi, ci] <= 0
                           else (k1s[ci], np.interp(r, np.arange(grid), k2s)))
        pts = np.array(pts, dtype=float)
        closed = bool(np.allclose(contour[0], contour[-1]))
        if np.min(_triangle_distance(pts[:, 0], pts[:, 1])) <= touch_tol:
            curves.append(PlanarCurve(pts, closed=closed))
    return curves


# --------------------------------------------------------------------------
# boundary crossings
# --------------------------------------------------------------------------

def boundary_crossings(params: HoneycombParams, samples_per_edge: int = 4096,
                       merge_tol: float = 1e-3, tangency_tol: float = 1e-9) -> BoundaryCrossings:
    """Roots of ``s -> sigma(k(s))`` on the closed path Gamma -> X -> M -> Gamma.

    Sign changes between samples are refined by bisection.  A local minimum of
    ``|sigma|`` below ``tangency_tol`` without a sign change counts as a double
    root, and so does a pair of simple roots closer than ``merge_tol`` in ``s``
    (a curve grazing the boundary); each is reported once.
    """
    s = np.append(boundary_samples(samples_per_edge), 1.0)
    vals = boundary_detuning(s, params)
    f = lambda u: float(boundary_detuning(u, params))

    roots: list[tuple[float, int]] = []
    for i in range(len(s) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append((s[i], 1))
        elif a * b < 0:
            roots.append((brentq(f, s[i], s[i + 1], xtol=1e-16, rtol=4 * np.finfo(float).eps), 1))
    absv = np.abs(vals)
    for i in range(1, len(s) - 1):
        if absv[i] <= absv[i - 1] and absv[i] <= absv[i + 1] and vals[i - 1] * vals[i + 1] > 0 and vals[i] != 0:
            res = minimize_scalar(lambda u: abs(f(u)), bounds=(s[i - 1], s[i + 1]), method="bounded",
                                  options={"xatol": 1e-14})
            if abs(f(res.x)) <= tangency_tol:
                roots.append((float(res.x), 2))
    roots.sort()

    merged: list[tuple[float, int]] = []
    for r, mult in roots:
        if merged and r - merged[-1][0] < merge_tol:
            prev, pm = merged[-1]
            keep = prev if abs(f(prev)) <= abs(f(r)) else r
            merged[-1] = (keep, max(2, pm + mult))
        else:
            merged.append((r, mult))

    out = []
    for r, mult in merged:
        k = WaveNumbers(*boundary_point(r))
        out.append(Crossing(float(r), k, float(f(r)), mult))
    return BoundaryCrossings(tuple(out))


def curves_to_rows(curves: Sequence[PlanarCurve]):
    """Rows ``(x, y, component_id)`` for CSV export."""
    for cid, curve in enumerate(curves):
        for x, y in curve.points:
            yield (float(x), float(y), cid)


def crossings_to_rows(crossings: BoundaryCrossings):
    for c in crossings:
        yield (c.s, c.k.k1, c.k.k2, c.sigma)
