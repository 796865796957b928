"""Problem instances: the two-oscillator cubic system and its honeycomb specialization.

All frequency computations go through a closed-form 2x2 generalized eigen
solve so that million-point sweeps stay cheap and bit-reproducible.  The
array functions (``honeycomb_mass``, ``honeycomb_stiffness``,
``modal_arrays``) broadcast over numpy inputs; the dataclass API wraps them
for single instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateMass, InvalidSystem, RepeatedEigenvalue

SQRT3 = math.sqrt(3.0)

D12_DEFAULT = 0.0815599
D22_DEFAULT = 12.48
D66_DEFAULT = 0.0000247357

MASS_CONVENTIONS = ("relative", "literal")


class WaveNumbers(NamedTuple):
    k1: float
    k2: float

    def in_triangle(self, tol: float = 1e-12) -> bool:
        """Membership in the closed irreducible Brillouin triangle Gamma-X-M."""
        k1, k2 = self.k1, self.k2
        # edges: k2 >= 0, Gamma-M line k2 <= k1/sqrt3, X-M line k2 <= sqrt3*(4pi/3 - k1)
        return (
            k2 >= -tol
            and k2 - k1 / SQRT3 <= tol
            and k2 - SQRT3 * (4.0 * math.pi / 3.0 - k1) <= tol
        )


GAMMA = WaveNumbers(0.0, 0.0)
X_POINT = WaveNumbers(4.0 * math.pi / 3.0, 0.0)
M_POINT = WaveNumbers(math.pi, math.pi / SQRT3)


@dataclass(frozen=True)
class HoneycombParams:
    """Resonator modal mass/stiffness plus plate bending coefficients.

    ``mass_convention`` selects the (1,1) entry of the cell mass matrix:
    ``"relative"`` uses ``M_H + M`` (resonator coordinate measured relative to
    the plate, which places the X-resonant curve through (0.146, 5.73));
    ``"literal"`` uses ``M_H`` alone.
    """

    modal_mass: float
    modal_stiffness: float
    cubic: float = 0.0
    d12: float = D12_DEFAULT
    d22: float = D22_DEFAULT
    d66: float = D66_DEFAULT
    mass_convention: str = "relative"

    def __post_init__(self):
        if not self.modal_mass > 0:
            raise InvalidSystem(f"modal_mass must be > 0, got {self.modal_mass}")
        if not self.modal_stiffness > 0:
            raise InvalidSystem(f"modal_stiffness must be > 0, got {self.modal_stiffness}")
        if self.mass_convention not in MASS_CONVENTIONS:
            raise InvalidSystem(
                f"mass_convention must be one of {MASS_CONVENTIONS}, got {self.mass_convention!r}"
            )


@dataclass(frozen=True)
class OscillatorSystem:
    """``M q'' + K q = -(M3 v^3, N3 y^3)`` with symmetric PD ``M`` and diagonal PD ``K``."""

    mass: np.ndarray
    stiffness: np.ndarray
    cubic_v: float = 0.0
    cubic_y: float = 0.0

    def __post_init__(self):
        m = np.array(self.mass, dtype=float)
        k = np.array(self.stiffness, dtype=float)
        if m.shape != (2, 2) or k.shape != (2, 2):
            raise InvalidSystem("mass and stiffness must be 2x2")
        if m[0, 1] != m[1, 0]:
            raise InvalidSystem("mass matrix must be symmetric")
        if not (m[0, 0] > 0 and m[0, 0] * m[1, 1] - m[0, 1] ** 2 > 0):
            raise InvalidSystem("mass matrix must be positive definite")
        if k[0, 1] != 0 or k[1, 0] != 0:
            raise InvalidSystem("stiffness matrix must be diagonal")
        if not (k[0, 0] > 0 and k[1, 1] > 0):
            raise InvalidSystem("stiffness entries must be strictly positive")
        m.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "stiffness", k)


@dataclass(frozen=True)
class ModalData:
    omega_minus: float
    omega_plus: float
    phi: np.ndarray = field(repr=False)

    @property
    def omega(self) -> tuple[float, float]:
        return (self.omega_minus, self.omega_plus)


def _sinc(x):
    """sin(x)/x with a Taylor fallback near the removable singularity."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(safe) / safe)


def honeycomb_mass(k1, k2):
    """Nondimensional plate mass ``M_H(k1, k2)``.

    Written as ``(sqrt3/2) sinc(k1/2) sinc((k1 + sqrt3 k2)/4)``, which equals the
    quotient form away from ``k1 = 0`` and ``k1 + sqrt3 k2 = 0`` and is its
    continuous extension there.
    """
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    out = 0.5 * SQRT3 * _sinc(0.5 * k1) * _sinc(0.25 * (k1 + SQRT3 * k2))
    return out[()] if out.ndim == 0 else out


def honeycomb_stiffness(k1, k2, params: HoneycombParams):
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    k1s, k2s = k1 * k1, k2 * k2
    bracket = k1s * k1s + 2.0 * k1s * k2s * (params.d12 + 2.0 * params.d66) + k2s * k2s * params.d22
    out = honeycomb_mass(k1, k2) * bracket
    return out[()] if np.ndim(out) == 0 else out


def honeycomb_matrices(k1, k2, params: HoneycombParams):
    """Entries ``(m11, m12, m22, k11, k22)`` of the cell matrices; broadcasts over k."""
    mh = honeycomb_mass(k1, k2)
    m = params.modal_mass
    m11 = mh + m if params.mass_convention == "relative" else mh
    return m11, m, m, honeycomb_stiffness(k1, k2, params), params.modal_stiffness


def build_honeycomb(k: WaveNumbers, params: HoneycombParams) -> OscillatorSystem:
    m11, m12, m22, k11, k22 = honeycomb_matrices(k[0], k[1], params)
    if m11 * m22 - m12 * m12 <= 0:
        raise DegenerateMass(
            f"mass matrix singular at k={tuple(k)}: M_H={float(honeycomb_mass(*k)):.6g} "
            f"<= modal_mass={params.modal_mass}"
        )
    return OscillatorSystem(
        mass=np.array([[m11, m12], [m12, m22]]),
        stiffness=np.diag([k11, k22]),
        cubic_v=0.0,
        cubic_y=params.cubic,
    )


def modal_arrays(m11, m12, m22, k11, k22):
    """Closed-form solution of ``det(K - w^2 M) = 0`` with mass-normalized modes.

    Returns ``(w_minus, w_plus, phi)`` where ``phi[..., i, c]`` is entry ``i`` of
    mode ``c`` (0 = acoustic, 1 = optical).  Signs: ``phi[0,0] >= 0`` and
    ``phi[1,1] >= 0``, each tie broken by the other entry being nonnegative.
    """
    m11, m12, m22, k11, k22 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (m11, m12, m22, k11, k22))
    )
    detm = m11 * m22 - m12 * m12
    half_b = 0.5 * (k11 * m22 + k22 * m11)
    # discriminant written as a sum of squares: no cancellation
    root = np.sqrt(0.25 * (k11 * m22 - k22 * m11) ** 2 + k11 * k22 * m12 * m12)
    lam_p = (half_b + root) / detm
    big = half_b + root
    lam_m = np.divide(k11 * k22, big, out=np.zeros_like(big), where=big > 0)

    cols = []
    for c, lam in enumerate((lam_m, lam_p)):
        r1 = np.hypot(k11 - lam * m11, lam * m12)
        r2 = np.hypot(k22 - lam * m22, lam * m12)
        use1 = r1 >= r2
        v1 = np.where(use1, lam * m12, k22 - lam * m22)
        v2 = np.where(use1, k11 - lam * m11, lam * m12)
        norm = np.sqrt(m11 * v1 * v1 + 2.0 * m12 * v1 * v2 + m22 * v2 * v2)
        # norm is zero only for repeated eigenvalues, rejected by callers
        with np.errstate(divide="ignore", invalid="ignore"):
            v1, v2 = v1 / norm, v2 / norm
        lead, other = (v1, v2) if c == 0 else (v2, v1)
        flip = (lead < 0) | ((lead == 0) & (other < 0))
        sign = np.where(flip, -1.0, 1.0)
        cols.append((v1 * sign, v2 * sign))

    phi = np.stack(
        [np.stack([cols[0][0], cols[1][0]], axis=-1), np.stack([cols[0][1], cols[1][1]], axis=-1)],
        axis=-2,
    )
    return np.sqrt(np.maximum(lam_m, 0.0)), np.sqrt(lam_p), phi


def modal_decomposition(system: OscillatorSystem) -> ModalData:
    m, k = system.mass, system.stiffness
    wm, wp, phi = modal_arrays(m[0, 0], m[0, 1], m[1, 1], k[0, 0], k[1, 1])
    wm, wp = float(wm), float(wp)
    if abs(wp - wm) < 1e-10 * wp:
        raise RepeatedEigenvalue(f"linear frequencies coincide: {wm!r}, {wp!r}")
    phi = np.array(phi)
    phi.setflags(write=False)
    return ModalData(wm, wp, phi)


def honeycomb_modal(k: WaveNumbers, params: HoneycombParams) -> ModalData:
    return modal_decomposition(build_honeycomb(k, params))


def honeycomb_frequencies(k1, k2, params: HoneycombParams):
    """Vectorized ``(w_minus, w_plus, phi)`` over arrays of wave numbers."""
    return modal_arrays(*honeycomb_matrices(k1, k2, params))


# --------------------------------------------------------------------------
# boundary of the Brillouin triangle, Gamma -> X -> M -> Gamma
# --------------------------------------------------------------------------

_VERTICES = np.array([GAMMA, X_POINT, M_POINT, GAMMA], dtype=float)
_EDGE_LENGTHS = np.linalg.norm(np.diff(_VERTICES, axis=0), axis=1)
PERIMETER = float(_EDGE_LENGTHS.sum())
# arc parameter of each vertex: Gamma = 0, X, M, Gamma = 1
VERTEX_S = np.concatenate([[0.0], np.cumsum(_EDGE_LENGTHS) / PERIMETER])
VERTEX_S[-1] = 1.0
S_GAMMA, S_X, S_M = 0.0, float(VERTEX_S[1]), float(VERTEX_S[2])


def boundary_point(s):
    """Map arc parameter ``s`` (taken mod 1, proportional to arc length) to ``(k1, k2)``."""
    s = np.mod(np.asarray(s, dtype=float), 1.0)
    k1 = np.empty_like(s)
    k2 = np.empty_like(s)
    for e in range(3):
        lo, hi = VERTEX_S[e], VERTEX_S[e + 1]
        sel = (s >= lo) & (s <= hi) if e == 2 else (s >= lo) & (s < hi)
        t = (s[sel] - lo) / (hi - lo)
        a, b = _VERTICES[e], _VERTICES[e + 1]
        k1[sel] = a[0] + t * (b[0] - a[0])
        k2[sel] = a[1] + t * (b[1] - a[1])
    if s.ndim == 0:
        return float(k1), float(k2)
    return k1, k2


def boundary_samples(n_per_edge: int) -> np.ndarray:
    """Arc parameters with ``n_per_edge`` points per edge, vertices included, ``s = 1`` dropped."""
    if n_per_edge < 3:
        raise ValueError("need at least 3 samples per edge")
    parts = [np.linspace(VERTEX_S[e], VERTEX_S[e + 1], n_per_edge)[:-1] for e in range(3)]
    s = np.concatenate(parts)
    # pin vertices to their exact parameters
    for e in range(3):
        s[e * (n_per_edge - 1)] = VERTEX_S[e]
    return s
