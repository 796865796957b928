"""Fourth-order Birkhoff normal form for two cubically coupled oscillators.

Polynomials in ``(z, zbar)`` are indexed by exponent pairs ``(alpha, beta)``
with ``z**alpha * zbar**beta``.  Quartic tables are kept real: the generating
function is purely imaginary, so ``QuarticForm.unit`` records the common
phase (``1`` or ``1j``) and ``coeffs`` hold the real magnitudes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .errors import ExactResonance, RepeatedEigenvalue
from .system import ModalData

DEFAULT_DELTA = 2.0 / 3.0
EXACT_RESONANCE_RTOL = 1e-12


class MultiIndexPair(NamedTuple):
    alpha: tuple[int, int]
    beta: tuple[int, int]

    @property
    def exponents(self) -> tuple[int, int, int, int]:
        return (*self.alpha, *self.beta)


def _quartic_keys() -> tuple[MultiIndexPair, ...]:
    keys = []
    for a1, a2, b1, b2 in itertools.product(range(5), repeat=4):
        if a1 + a2 + b1 + b2 == 4:
            keys.append(MultiIndexPair((a1, a2), (b1, b2)))
    return tuple(keys)


QUARTIC_KEYS = _quartic_keys()
RESONANT_KEYS = (MultiIndexPair((3, 0), (0, 1)), MultiIndexPair((0, 1), (3, 0)))
DIAGONAL_KEYS = (
    MultiIndexPair((2, 0), (2, 0)),
    MultiIndexPair((1, 1), (1, 1)),
    MultiIndexPair((0, 2), (0, 2)),
)


# --------------------------------------------------------------------------
# generic polynomial helpers (dict of exponent 4-tuples -> complex)
# --------------------------------------------------------------------------

def _derivative(poly: Mapping, var: int) -> dict:
    out = {}
    for exps, c in poly.items():
        e = exps[var]
        if e:
            new = list(exps)
            new[var] -= 1
            out[tuple(new)] = out.get(tuple(new), 0.0) + c * e
    return out


def _product(p: Mapping, q: Mapping) -> dict:
    out = {}
    for ep, cp in p.items():
        for eq, cq in q.items():
            key = tuple(a + b for a, b in zip(ep, eq))
            out[key] = out.get(key, 0.0) + cp * cq
    return out


def poisson_bracket(f: Mapping, g: Mapping) -> dict:
    """``{f, g} = i * sum_j (d_zj f d_zbarj g - d_zbarj f d_zj g)``."""
    out: dict = {}
    for j in (0, 1):
        for sign, (a, b) in ((1.0, (j, j + 2)), (-1.0, (j + 2, j))):
            for key, c in _product(_derivative(f, a), _derivative(g, b)).items():
                out[key] = out.get(key, 0.0) + 1j * sign * c
    return {k: v for k, v in out.items() if v != 0}


def evaluate_polynomial(poly: Mapping, z) -> complex:
    """Evaluate at ``z`` with ``zbar = conj(z)``."""
    z1, z2 = complex(z[0]), complex(z[1])
    w = (z1, z2, z1.conjugate(), z2.conjugate())
    total = 0j
    for exps, c in poly.items():
        term = c
        for base, e in zip(w, exps):
            if e:
                term *= base**e
        total += term
    return total


def normal_oscillator(omega) -> dict:
    """Quadratic part ``N = w- |z1|^2 + w+ |z2|^2`` as a polynomial dict."""
    return {(1, 0, 1, 0): complex(omega[0]), (0, 1, 0, 1): complex(omega[1])}


# --------------------------------------------------------------------------
# quartic forms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuarticForm:
    coeffs: Mapping[MultiIndexPair, float] = field(default_factory=dict)
    unit: complex = 1.0

    def __post_init__(self):
        clean = {}
        for key, c in self.coeffs.items():
            key = MultiIndexPair(tuple(key[0]), tuple(key[1]))
            if sum(key.alpha) + sum(key.beta) != 4:
                raise ValueError(f"not a quartic key: {key}")
            if c != 0:
                clean[key] = float(c)
        object.__setattr__(self, "coeffs", clean)

    def __getitem__(self, key) -> float:
        return self.coeffs.get(MultiIndexPair(tuple(key[0]), tuple(key[1])), 0.0)

    def __len__(self):
        return len(self.coeffs)

    def complex_coeffs(self) -> dict:
        return {k.exponents: self.unit * c for k, c in self.coeffs.items()}

    def scaled(self, c: float) -> "QuarticForm":
        return QuarticForm({k: c * v for k, v in self.coeffs.items()}, self.unit)

    def is_conjugation_symmetric(self, rtol: float = 0.0) -> bool:
        for (a, b), c in self.coeffs.items():
            other = self[(b, a)]
            if abs(abs(c) - abs(other)) > rtol * abs(c):
                return False
        return True

    def __call__(self, z) -> complex:
        return evaluate_polynomial(self.complex_coeffs(), z)

    def gradient(self, z) -> np.ndarray:
        """``(d_z1, d_z2, d_zbar1, d_zbar2)`` at ``z`` (with ``zbar = conj z``)."""
        poly = self.complex_coeffs()
        return np.array([evaluate_polynomial(_derivative(poly, v), z) for v in range(4)])


def polynomial_norms(p: QuarticForm) -> tuple[float, float, float]:
    """Weighted coefficient sums ``(P1, P2, max(P1, P2))`` with weights ``alpha_j``."""
    p1 = p2 = 0.0
    for key, c in p.coeffs.items():
        p1 += key.alpha[0] * abs(c)
        p2 += key.alpha[1] * abs(c)
    return p1, p2, max(p1, p2)


def quartic_coefficients(modal: ModalData, m3: float, n3: float) -> dict[tuple[int, int], float]:
    """Coefficients ``f_ij`` of the quartic potential ``sum f_ij q1^i q2^j``."""
    (p1m, p1p), (p2m, p2p) = modal.phi
    f = {}
    for i in range(5):
        j = 4 - i
        c = 6.0 / (math.factorial(i) * math.factorial(j))
        f[(i, j)] = c * (p1m**i * p1p**j * m3 + p2m**i * p2p**j * n3)
    return f


def g_coefficients(f: Mapping[tuple[int, int], float], omega_minus: float, omega_plus: float) -> QuarticForm:
    """Quartic part ``G`` of the Hamiltonian in complex coordinates."""
    coeffs = {}
    for key in QUARTIC_KEYS:
        (a1, a2), (b1, b2) = key
        i, j = a1 + b1, a2 + b2
        fij = f.get((i, j), 0.0)
        if fij == 0:
            continue
        scale = 4.0 * math.sqrt(omega_minus) ** i * math.sqrt(omega_plus) ** j
        coeffs[key] = fij / scale * math.comb(i, a1) * math.comb(j, a2)
    return QuarticForm(coeffs)


def diagonal_coefficients(modal: ModalData, m3: float, n3: float) -> tuple[float, float, float]:
    """Closed forms for the coefficients of ``|z1|^4, |z1|^2|z2|^2, |z2|^4``."""
    wm, wp = modal.omega
    (p1m, p1p), (p2m, p2p) = modal.phi
    h2020 = 3.0 / (8.0 * wm**2) * (p1m**4 * m3 + p2m**4 * n3)
    h1111 = 3.0 / (2.0 * wm * wp) * (p1m**2 * p1p**2 * m3 + p2m**2 * p2p**2 * n3)
    h0202 = 3.0 / (8.0 * wp**2) * (p1p**4 * m3 + p2p**4 * n3)
    return h2020, h1111, h0202


def small_divisor(omega, key: MultiIndexPair) -> float:
    (a1, a2), (b1, b2) = key
    return omega[0] * (a1 - b1) + omega[1] * (a2 - b2)


def gamma_floor(omega, resonant: bool) -> float:
    wm, wp = omega
    if resonant:
        return min(wm, wp - wm)
    return min(wm, wp - wm, abs(3.0 * wm - wp))


def detuning(modal: ModalData) -> float:
    return modal.omega_plus - 3.0 * modal.omega_minus


def solve_homological(g: QuarticForm, omega, resonant: bool) -> QuarticForm:
    """Generating function removing every non-normal-form monomial of ``g``.

    The returned form has ``unit = 1j``: its coefficients are
    ``G / (omega . (alpha - beta))``.
    """
    wm, wp = omega
    if abs(wp - wm) < 1e-10 * wp:
        raise RepeatedEigenvalue(f"linear frequencies coincide: {wm!r}, {wp!r}")
    if not resonant and abs(3.0 * wm - wp) < EXACT_RESONANCE_RTOL * wp:
        raise ExactResonance(f"3:1 resonance: omega = ({wm!r}, {wp!r})")
    coeffs = {}
    for key, c in g.coeffs.items():
        if key.alpha == key.beta or (resonant and key in RESONANT_KEYS):
            continue
        coeffs[key] = c / small_divisor(omega, key)
    return QuarticForm(coeffs, unit=1j)


def remainder_constant(s: QuarticForm, g: QuarticForm, h4: QuarticForm) -> float:
    """``R_dagger = sum_j S^(j) (2 H4^(j) + Ghat^(j))`` with ``Ghat = G - H4``."""
    s1, s2, _ = polynomial_norms(s)
    h1, h2, _ = polynomial_norms(h4)
    ghat = QuarticForm({k: g[k] - h4[k] for k in set(g.coeffs) | set(h4.coeffs)})
    gh1, gh2, _ = polynomial_norms(ghat)
    return s1 * (2.0 * h1 + gh1) + s2 * (2.0 * h2 + gh2)


def resonant_coefficient(f: Mapping[tuple[int, int], float], omega) -> float:
    """Coefficient of ``z2 zbar1^3 + z1^3 zbar2`` kept by the resonant normal form."""
    wm, wp = omega
    return f.get((3, 1), 0.0) / (4.0 * wm**1.5 * math.sqrt(wp))


@dataclass(frozen=True)
class Amplitudes:
    a_minus: float
    a_plus: float


@dataclass(frozen=True)
class NormalForm:
    h4_20_20: float
    h4_11_11: float
    h4_02_02: float
    f31_res: float
    s: QuarticForm
    s_star: float
    r_dagger: float
    sigma: float
    gamma: float
    resonant: bool
    omega: tuple[float, float]
    g: QuarticForm = field(repr=False)

    @property
    def h4(self) -> QuarticForm:
        coeffs = dict(zip(DIAGONAL_KEYS, (self.h4_20_20, self.h4_11_11, self.h4_02_02)))
        if self.resonant:
            for key in RESONANT_KEYS:
                coeffs[key] = self.f31_res
        return QuarticForm(coeffs)

    @property
    def hessian(self) -> np.ndarray:
        """Hessian of the action-space quartic energy (the twist matrix)."""
        return np.array(
            [[2.0 * self.h4_20_20, self.h4_11_11], [self.h4_11_11, 2.0 * self.h4_02_02]]
        )

    @property
    def r_star(self) -> float:
        return 4.5**6 * self.r_dagger


def build_normal_form(modal: ModalData, m3: float, n3: float, resonant: bool = False) -> NormalForm:
    omega = modal.omega
    f = quartic_coefficients(modal, m3, n3)
    g = g_coefficients(f, *omega)
    closed = diagonal_coefficients(modal, m3, n3)
    for key, value in zip(DIAGONAL_KEYS, closed):
        assert abs(g[key] - value) <= 1e-12 * max(1.0, abs(value)), (key, g[key], value)
    s = solve_homological(g, omega, resonant)
    f31 = resonant_coefficient(f, omega)
    if resonant:
        assert abs(g[RESONANT_KEYS[0]] - f31) <= 1e-12 * max(1.0, abs(f31))
    nf_h4 = QuarticForm(dict(zip(DIAGONAL_KEYS, closed)))
    if resonant:
        nf_h4 = QuarticForm({**nf_h4.coeffs, **{k: g[k] for k in RESONANT_KEYS}})
    _, _, s_star = polynomial_norms(s)
    return NormalForm(
        h4_20_20=closed[0],
        h4_11_11=closed[1],
        h4_02_02=closed[2],
        f31_res=f31,
        s=s,
        s_star=s_star,
        r_dagger=remainder_constant(s, g, nf_h4),
        sigma=omega[1] - 3.0 * omega[0],
        gamma=gamma_floor(omega, resonant),
        resonant=resonant,
        omega=omega,
        g=g,
    )


def admissible_radius(s_star: float, delta: float = DEFAULT_DELTA) -> float:
    """Largest ``||z(0)||`` satisfying the smallness condition ``r^2 S* <= 1 - delta``."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if s_star == 0:
        return math.inf
    return delta * math.sqrt((1.0 - delta) / s_star)


def admissible_amplitudes(modal: ModalData, s_star: float, delta: float = DEFAULT_DELTA) -> Amplitudes:
    """Initial displacement thresholds ``a = sqrt((1-delta) delta^2 / (2 w S*))``.

    At ``delta = 2/3`` this is ``sqrt(2 / (27 w S*))`` for each mode.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if s_star < 0:
        raise ValueError("s_star must be nonnegative")
    if math.isinf(s_star):
        return Amplitudes(0.0, 0.0)
    if s_star == 0:
        return Amplitudes(math.inf, math.inf)
    c = (1.0 - delta) * delta**2 / (2.0 * s_star)
    return Amplitudes(math.sqrt(c / modal.omega_minus), math.sqrt(c / modal.omega_plus))


def actions_from_amplitudes(modal: ModalData, a_minus: float, a_plus: float) -> tuple[float, float]:
    """Initial actions for ``q(0) = (a-, a+)``, ``p(0) = 0``."""
    return 0.5 * modal.omega_minus * a_minus**2, 0.5 * modal.omega_plus * a_plus**2


def nonlinear_frequencies(modal: ModalData, m3: float, n3: float, i1: float, i2: float) -> tuple[float, float]:
    h2020, h1111, h0202 = diagonal_coefficients(modal, m3, n3)
    return (
        modal.omega_minus + 2.0 * h2020 * i1 + h1111 * i2,
        modal.omega_plus + 2.0 * h0202 * i2 + h1111 * i1,
    )


def c_dagger(nf: NormalForm) -> float:
    """Per-instance constant with ``S* <= c_dagger / |sigma|``."""
    return abs(nf.sigma) * nf.s_star


def nonresonant_regime(epsilon: float, nf: NormalForm, delta: float = DEFAULT_DELTA) -> bool:
    """True when ``epsilon <= c1 sqrt|sigma|`` (nonresonant normal form applies)."""
    cd = c_dagger(nf)
    if cd == 0:
        return True
    c1 = delta * math.sqrt((1.0 - delta) / cd)
    return epsilon <= c1 * math.sqrt(abs(nf.sigma))


# --------------------------------------------------------------------------
# vectorized path used by sweeps
# --------------------------------------------------------------------------

_KEY_TABLE = np.array(
    [
        (a1, a2, b1, b2, a1 + b1, a2 + b2, math.comb(a1 + b1, a1) * math.comb(a2 + b2, a2))
        for (a1, a2), (b1, b2) in QUARTIC_KEYS
    ],
    dtype=float,
)


def s_norm_arrays(wm, wp, phi, m3: float, n3: float, resonant: bool = False):
    """``(S1, S2)`` for arrays of modal data; ``phi`` has trailing shape (2, 2).

    Entries at exact divisor zeros come out as ``inf``.  At the Gamma point
    (``wm == 0`` with a vanishing acoustic resonator component) the limit
    value is returned.
    """
    wm = np.asarray(wm, dtype=float)
    wp = np.asarray(wp, dtype=float)
    p1m, p1p = phi[..., 0, 0], phi[..., 0, 1]
    p2m, p2p = phi[..., 1, 0], phi[..., 1, 1]
    s1 = np.zeros(np.broadcast(wm, wp).shape)
    s2 = np.zeros_like(s1)
    with np.errstate(divide="ignore", invalid="ignore"):
        for a1, a2, b1, b2, i, j, binom in _KEY_TABLE:
            if a1 == b1 and a2 == b2:
                continue
            if resonant and (a1, a2, b1, b2) in ((3, 0, 0, 1), (0, 1, 3, 0)):
                continue
            ii, jj = int(i), int(j)
            fij = 6.0 / (math.factorial(ii) * math.factorial(jj)) * (
                p1m**ii * p1p**jj * m3 + p2m**ii * p2p**jj * n3
            )
            g = fij / (4.0 * np.sqrt(wm) ** ii * np.sqrt(wp) ** jj) * binom
            g = np.where(fij == 0, 0.0, g)
            d = np.abs(wm * (a1 - b1) + wp * (a2 - b2))
            term = np.where(g == 0, 0.0, np.abs(g) / d)
            if a1:
                s1 = s1 + a1 * term
            if a2:
                s2 = s2 + a2 * term
    return s1, s2


def admissible_amplitude_arrays(wm, wp, s_star, delta: float = DEFAULT_DELTA):
    c = (1.0 - delta) * delta**2 / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        am = np.sqrt(c / (np.asarray(wm) * s_star))
        ap = np.sqrt(c / (np.asarray(wp) * s_star))
    return am, ap


def nonlinear_frequency_arrays(wm, wp, phi, m3: float, n3: float, i1, i2):
    """Vectorized nonlinear frequencies; terms with vanishing modal factors are dropped."""
    wm = np.asarray(wm, dtype=float)
    wp = np.asarray(wp, dtype=float)
    p1m, p1p = phi[..., 0, 0], phi[..., 0, 1]
    p2m, p2p = phi[..., 1, 0], phi[..., 1, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        n2020 = p1m**4 * m3 + p2m**4 * n3
        n1111 = p1m**2 * p1p**2 * m3 + p2m**2 * p2p**2 * n3
        n0202 = p1p**4 * m3 + p2p**4 * n3
        t_mm = np.where(n2020 * i1 == 0, 0.0, 3.0 / (4.0 * wm**2) * n2020 * i1)
        t_mp = np.where(n1111 * i2 == 0, 0.0, 3.0 / (2.0 * wm * wp) * n1111 * i2)
        t_pm = np.where(n1111 * i1 == 0, 0.0, 3.0 / (2.0 * wm * wp) * n1111 * i1)
        t_pp = np.where(n0202 * i2 == 0, 0.0, 3.0 / (4.0 * wp**2) * n0202 * i2)
    return wm + t_mm + t_mp, wp + t_pp + t_pm
