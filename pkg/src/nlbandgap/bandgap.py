"""Linear and nonlinear bandgaps along the boundary of the Brillouin triangle."""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import AllExcluded
from .normal_form import (
    DEFAULT_DELTA,
    admissible_amplitude_arrays,
    nonlinear_frequency_arrays,
    s_norm_arrays,
)
from .resonance import DEFAULT_RECT, boundary_crossings, x_detuning
from .system import (
    S_GAMMA,
    S_X,
    X_POINT,
    HoneycombParams,
    WaveNumbers,
    boundary_point,
    boundary_samples,
    honeycomb_frequencies,
)

N_SAMPLES = 2048
EXCLUSION_FRACTION = 0.1

__all__ = [
    "AmplitudePolicy",
    "FixedAmplitudes",
    "ADMISSIBLE",
    "PER_K_ADMISSIBLE",
    "x_admissible_amplitudes",
    "resolve_policy",
    "LinearBandgap",
    "BandgapReport",
    "BoundaryProfile",
    "SweepResult",
    "linear_bandgap",
    "boundary_profile",
    "nonlinear_bandgap",
    "classify_parameters",
    "bandgap_sweep",
    "default_threads",
]


# --------------------------------------------------------------------------
# amplitude policies
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AmplitudePolicy:
    """Admissible amplitudes at the given ``delta``.

    ``per_k=False`` (default) evaluates the threshold at the vertex X and holds
    the resulting ``(a_minus, a_plus)`` fixed along the boundary; ``per_k=True``
    uses the local threshold at every wave number.
    """

    delta: float = DEFAULT_DELTA
    per_k: bool = False


@dataclass(frozen=True)
class FixedAmplitudes:
    """The same initial displacements ``(a_minus, a_plus)`` at every wave number."""

    a_minus: float
    a_plus: float


ADMISSIBLE = AmplitudePolicy()
PER_K_ADMISSIBLE = AmplitudePolicy(per_k=True)


def x_admissible_amplitudes(params: HoneycombParams, delta: float = DEFAULT_DELTA) -> FixedAmplitudes:
    """Nonresonant admissible amplitudes at the vertex X."""
    wm, wp, phi = honeycomb_frequencies(X_POINT.k1, X_POINT.k2, params)
    s1, s2 = s_norm_arrays(wm, wp, phi, 0.0, params.cubic)
    s_star = float(max(s1, s2))
    if s_star == 0:
        return FixedAmplitudes(0.0, 0.0)
    am, ap = admissible_amplitude_arrays(wm, wp, s_star, delta)
    return FixedAmplitudes(float(am), float(ap))


def resolve_policy(policy, params: HoneycombParams):
    """Turn the X-anchored admissible policy into concrete fixed amplitudes."""
    if isinstance(policy, AmplitudePolicy) and not policy.per_k:
        return x_admissible_amplitudes(params, policy.delta)
    return policy


# --------------------------------------------------------------------------
# result types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearBandgap:
    width: float
    argmax_acoustic: WaveNumbers
    argmin_optical: WaveNumbers
    s_max: float
    s_min: float
    omega_max: float
    omega_min: float


@dataclass(frozen=True)
class BoundaryProfile:
    """Frequencies and normal-form data sampled along the triangle boundary."""

    s: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    omega_minus: np.ndarray
    omega_plus: np.ndarray
    omega_minus_nl: np.ndarray
    omega_plus_nl: np.ndarray
    s_star: np.ndarray
    epsilon: np.ndarray
    excluded: np.ndarray


@dataclass(frozen=True)
class BandgapReport:
    w_linear: float
    w_nonlinear: float
    b_per: float
    argmax_acoustic: WaveNumbers
    argmin_optical: WaveNumbers
    good: bool
    resonant_exclusions: tuple[tuple[float, float], ...]
    s_max: float = math.nan
    s_min: float = math.nan
    profile: BoundaryProfile | None = field(default=None, repr=False, compare=False)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _golden_extremum(func: Callable[[float], float], a: float, b: float, c: float,
                     maximize: bool) -> tuple[float, float]:
    """Refine an extremum bracketed by the samples ``a < b < c``.

    The sampled midpoint is kept when the refined point does not improve on it,
    so extrema located at a vertex sample are returned exactly.
    """
    sign = -1.0 if maximize else 1.0
    fb = func(b)
    res = minimize_scalar(lambda u: sign * func(u), bracket=(a, b, c), method="golden",
                          tol=1e-10)
    fx = sign * res.fun
    if res.x < a or res.x > c or (fx <= fb if maximize else fx >= fb):
        return b, fb
    return float(res.x), float(fx)


def _neighbours(s: np.ndarray, i: int) -> tuple[float, float, float]:
    n = len(s)
    lo = s[i - 1] - (1.0 if i == 0 else 0.0)
    hi = s[i + 1] if i + 1 < n else 1.0 + s[0]
    return lo, s[i], hi


def _frequencies_at(s, params):
    k1, k2 = boundary_point(s)
    return honeycomb_frequencies(k1, k2, params)


# --------------------------------------------------------------------------
# linear bandgap
# --------------------------------------------------------------------------

def linear_bandgap(params: HoneycombParams, n_samples: int = N_SAMPLES) -> LinearBandgap:
    """``min w_plus - max w_minus`` over the boundary, sampled and golden-refined."""
    s = boundary_samples(n_samples)
    wm, wp, _ = _frequencies_at(s, params)
    fm = lambda u: float(_frequencies_at(np.array([u]), params)[0][0])
    fp = lambda u: float(_frequencies_at(np.array([u]), params)[1][0])
    s_max, w_max = _golden_extremum(fm, *_neighbours(s, int(np.argmax(wm))), maximize=True)
    s_min, w_min = _golden_extremum(fp, *_neighbours(s, int(np.argmin(wp))), maximize=False)
    s_max, s_min = s_max % 1.0, s_min % 1.0
    return LinearBandgap(
        width=w_min - w_max,
        argmax_acoustic=WaveNumbers(*boundary_point(s_max)),
        argmin_optical=WaveNumbers(*boundary_point(s_min)),
        s_max=s_max,
        s_min=s_min,
        omega_max=w_max,
        omega_min=w_min,
    )


# --------------------------------------------------------------------------
# nonlinear bandgap
# --------------------------------------------------------------------------

def _actions(policy, wm, wp, s_star):
    if isinstance(policy, FixedAmplitudes):
        return 0.5 * wm * policy.a_minus**2, 0.5 * wp * policy.a_plus**2
    d = policy.delta
    # I = w a^2 / 2 with a^2 = (1 - d) d^2 / (2 w S*); written without w so Gamma stays finite
    with np.errstate(divide="ignore"):
        act = (1.0 - d) * d**2 / (4.0 * s_star)
    return act, act


def _nonlinear_at(s, params, policy):
    k1, k2 = boundary_point(s)
    wm, wp, phi = honeycomb_frequencies(k1, k2, params)
    if params.cubic == 0:
        s1 = s2 = np.zeros_like(wm)
    else:
        s1, s2 = s_norm_arrays(wm, wp, phi, 0.0, params.cubic)
    s_star = np.maximum(s1, s2)
    i1, i2 = _actions(policy, wm, wp, s_star)
    i1 = np.where(np.isfinite(i1), i1, 0.0)
    i2 = np.where(np.isfinite(i2), i2, 0.0)
    wmn, wpn = nonlinear_frequency_arrays(wm, wp, phi, 0.0, params.cubic, i1, i2)
    return k1, k2, wm, wp, wmn, wpn, s_star


def _exclusion_intervals(s, epsilon, crossings_s, fraction, radius_scale):
    """Arc intervals around each crossing where the admissible radius has collapsed.

    The interval is the connected run of samples around the crossing whose
    admissible radius falls below ``fraction`` times the boundary median,
    widened to at least one sample spacing and scaled by ``radius_scale``.
    """
    finite = epsilon[np.isfinite(epsilon)]
    threshold = fraction * (np.median(finite) if finite.size else 0.0)
    n = len(s)
    spacing = 1.0 / n
    intervals = []
    for sc in crossings_s:
        i0 = int(np.argmin(np.abs((s - sc + 0.5) % 1.0 - 0.5)))
        lo = hi = i0
        while epsilon[(lo - 1) % n] < threshold and (i0 - lo) < n:
            lo -= 1
        while epsilon[(hi + 1) % n] < threshold and (hi - i0) < n:
            hi += 1
        left = max(sc - (s[lo % n] - (1.0 if lo < 0 else 0.0)), spacing)
        right = max((s[hi % n] + (1.0 if hi >= n else 0.0)) - sc, spacing)
        intervals.append((sc - radius_scale * left, sc + radius_scale * right))
    return tuple(intervals)


def _excluded_mask(s, intervals):
    mask = np.zeros(len(s), dtype=bool)
    for lo, hi in intervals:
        # distance along the closed loop
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        mask |= np.abs((s - mid + 0.5) % 1.0 - 0.5) <= half
    return mask


def boundary_profile(params: HoneycombParams, amp_policy=ADMISSIBLE, n_samples: int = N_SAMPLES,
                     exclusion_fraction: float = EXCLUSION_FRACTION, radius_scale: float = 1.0):
    """Sampled linear and nonlinear dispersion along the boundary with exclusions."""
    s = boundary_samples(n_samples)
    delta = amp_policy.delta if isinstance(amp_policy, AmplitudePolicy) else DEFAULT_DELTA
    amp_policy = resolve_policy(amp_policy, params)
    k1, k2, wm, wp, wmn, wpn, s_star = _nonlinear_at(s, params, amp_policy)
    with np.errstate(divide="ignore"):
        eps = np.where(s_star > 0, delta * np.sqrt((1.0 - delta) / s_star), np.inf)
    if params.cubic == 0:
        intervals = ()
    else:
        crossings = boundary_crossings(params)
        intervals = _exclusion_intervals(s, eps, crossings.s, exclusion_fraction, radius_scale)
    excluded = _excluded_mask(s, intervals)
    prof = BoundaryProfile(s, k1, k2, wm, wp, wmn, wpn, s_star, eps, excluded)
    return prof, intervals


def nonlinear_bandgap(params: HoneycombParams, amp_policy=ADMISSIBLE, n_samples: int = N_SAMPLES,
                      exclusion_fraction: float = EXCLUSION_FRACTION,
                      radius_scale: float = 1.0) -> BandgapReport:
    """Nonlinear bandgap from the fourth-order frequency corrections.

    ``amp_policy`` is an :class:`AmplitudePolicy` (default: admissible
    amplitudes at X held fixed along the boundary) or :class:`FixedAmplitudes`.
    """
    lin = linear_bandgap(params, n_samples)
    amp_policy = resolve_policy(amp_policy, params)
    prof, intervals = boundary_profile(params, amp_policy, n_samples, exclusion_fraction, radius_scale)
    s = prof.s
    keep = ~prof.excluded
    if not keep.any():
        raise AllExcluded(f"resonant exclusions {intervals} cover the boundary")
    idx = np.flatnonzero(keep)
    imax = int(idx[np.argmax(prof.omega_minus_nl[keep])])
    imin = int(idx[np.argmin(prof.omega_plus_nl[keep])])

    def refine(i, which, maximize):
        # only refine when both neighbours are admissible samples
        n = len(s)
        if not (keep[(i - 1) % n] and keep[(i + 1) % n]):
            return s[i], float((prof.omega_minus_nl if which == 0 else prof.omega_plus_nl)[i])
        func = lambda u: float(_nonlinear_at(np.array([u]), params, amp_policy)[4 + which][0])
        return _golden_extremum(func, *_neighbours(s, i), maximize=maximize)

    s_max, w_max = refine(imax, 0, True)
    s_min, w_min = refine(imin, 1, False)
    s_max, s_min = s_max % 1.0, s_min % 1.0
    w_nl = w_min - w_max
    b_per = 100.0 * (w_nl / lin.width - 1.0)

    i_x = int(np.argmin(np.abs(s - S_X)))
    i_g = int(np.argmin(np.abs(s - S_GAMMA)))
    good = bool(imax == i_x and imin == i_g and keep[i_x] and keep[i_g])
    ex = prof.excluded
    if good and ex.any():
        # inside the resonant neighbourhoods the true frequencies lie between the
        # linear and the nonresonant-formula values; the edges must beat both
        top = max(prof.omega_minus[ex].max(), prof.omega_minus_nl[ex].max())
        bottom = min(prof.omega_plus[ex].min(), prof.omega_plus_nl[ex].min())
        good = bool(prof.omega_minus_nl[i_x] > top and prof.omega_plus_nl[i_g] < bottom)
    return BandgapReport(
        w_linear=lin.width,
        w_nonlinear=w_nl,
        b_per=b_per,
        argmax_acoustic=WaveNumbers(*boundary_point(s_max)),
        argmin_optical=WaveNumbers(*boundary_point(s_min)),
        good=good,
        resonant_exclusions=intervals,
        s_max=s_max,
        s_min=s_min,
        profile=prof,
    )


def classify_parameters(params: HoneycombParams, **kwargs) -> bool:
    """Whether the nonresonant frequency formula governs the bandgap edges."""
    return nonlinear_bandgap(params, **kwargs).good


# --------------------------------------------------------------------------
# parameter sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    m_tilde: np.ndarray
    k_tilde: np.ndarray
    w_lin: np.ndarray
    w_nl: np.ndarray
    b_per: np.ndarray
    good: np.ndarray
    sigma_x: np.ndarray  # detuning at X; negative above the X-resonant curve

    def rows(self):
        for idx in np.ndindex(self.m_tilde.shape):
            yield (
                float(self.m_tilde[idx]),
                float(self.k_tilde[idx]),
                float(self.w_lin[idx]),
                float(self.w_nl[idx]),
                float(self.b_per[idx]),
                int(self.good[idx]),
            )


def default_threads() -> int:
    env = os.environ.get("NLBANDGAP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def bandgap_sweep(rect=DEFAULT_RECT, grid: Sequence[int] = (16, 16), n3: float = -1e4,
                  template: HoneycombParams | None = None, amp_policy=ADMISSIBLE,
                  n_samples: int = N_SAMPLES, threads: int | None = None) -> SweepResult:
    """``B_per`` over a uniform ``(M, K)`` grid; rows follow ``M``, columns ``K``.

    Cells are independent and mapped in a fixed order, so the result does not
    depend on ``threads``.
    """
    nm, nk = grid
    if nm < 2 or nk < 2:
        raise ValueError("grid must be at least 2x2")
    template = template or HoneycombParams(0.1, 1.0)
    ms = np.linspace(rect[0][0], rect[0][1], nm)
    ks = np.linspace(rect[1][0], rect[1][1], nk)
    M, K = np.meshgrid(ms, ks, indexing="ij")

    def cell(idx):
        p = dataclasses.replace(template, modal_mass=float(M[idx]), modal_stiffness=float(K[idx]), cubic=n3)
        r = nonlinear_bandgap(p, amp_policy, n_samples)
        return r.w_linear, r.w_nonlinear, r.b_per, r.good

    cells = list(np.ndindex(M.shape))
    threads = threads or default_threads()
    if threads == 1:
        results = [cell(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(cell, cells))
    arr = np.array([r[:3] for r in results], dtype=float).reshape(M.shape + (3,))
    good = np.array([r[3] for r in results], dtype=bool).reshape(M.shape)
    return SweepResult(M, K, arr[..., 0], arr[..., 1], arr[..., 2], good, x_detuning(M, K, template))
