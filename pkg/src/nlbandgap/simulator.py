"""Time integration of the full and truncated systems, spectral frequency
measurement, and numerical verification of the remainder estimates.

All trajectories live in the modal coordinates ``q = Phi^{-1} (v, y)`` with
``p = dq/dt``, where the Hamiltonian reads

    H = |p|^2 / 2 + (w-^2 q1^2 + w+^2 q2^2) / 2 + M3 v^4 / 4 + N3 y^4 / 4.

The complex coordinates used by the normal form are
``z_j = (sqrt(w_j) q_j + i p_j / sqrt(w_j)) / sqrt(2)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import Blowup, EnergyDrift, PreconditionFail, SingularActionAngle, SpectralAmbiguity
from .normal_form import NormalForm, QuarticForm
from .system import ModalData, OscillatorSystem, modal_decomposition

ENERGY_TOL = 1e-9
BLOWUP_NORM = 1e6
STEPS_PER_PERIOD = 64
PHI_S_SUBSTEPS = 16

__all__ = [
    "Trajectory",
    "AsymptoticSolution",
    "RemainderReport",
    "hamiltonian",
    "to_complex",
    "from_complex",
    "action_angle",
    "from_action_angle",
    "action_angle_roundtrip",
    "integrate_full",
    "integrate_truncated",
    "dominant_frequency",
    "measure_frequencies",
    "measure_nonlinear_frequencies",
    "GeneratingFlow",
    "verify_remainder",
    "default_dt",
]

# Symmetric compositions of the second-order kick-rotate-kick step.
# Order 6: Kahan & Li s9odr6a; order 8: Kahan & Li s15odr8.
_HALF_6 = (
    0.39216144400731413927925056,
    0.33259913678935943859974864,
    -0.70624617255763935980996482,
    0.08221359629355080023149045,
    0.79854399093482996339895035,
)
_HALF_8 = (
    0.74167036435061295344822780,
    -0.40910082580003159399730010,
    0.19075471029623837995387626,
    -0.57386247111608226665638773,
    0.29906418130365592384446354,
    0.33462491824529818378495798,
    0.31529309239676659663205666,
    -0.79688793935291635401978884,
)


def _mirror(half):
    return tuple(half) + tuple(reversed(half[:-1]))


def composition_weights(order: int) -> tuple[float, ...]:
    if order == 2:
        return (1.0,)
    if order == 4:
        c = 2.0 ** (1.0 / 3.0)
        g1 = 1.0 / (2.0 - c)
        return (g1, -c * g1, g1)
    if order == 6:
        return _mirror(_HALF_6)
    if order == 8:
        return _mirror(_HALF_8)
    raise ValueError(f"unsupported integrator order {order}; choose 2, 4, 6 or 8")


# --------------------------------------------------------------------------
# trajectories and coordinates
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, 4): q1, q2, p1, p2
    energy: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def relative_drift(self) -> float:
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / abs(e0)) if e0 != 0 else 0.0

    def rows(self):
        for t, s, e in zip(self.times, self.states, self.energy):
            yield (float(t), *map(float, s), float(e))

    def concatenate(self, other: "Trajectory") -> "Trajectory":
        """Append ``other`` whose first sample repeats this trajectory's last."""
        return Trajectory(
            np.concatenate([self.times, other.times[1:]]),
            np.concatenate([self.states, other.states[1:]]),
            np.concatenate([self.energy, other.energy[1:]]),
        )


def _modal_of(system_or_modal) -> ModalData:
    if isinstance(system_or_modal, ModalData):
        return system_or_modal
    return modal_decomposition(system_or_modal)


def hamiltonian(modal: ModalData, m3: float, n3: float, states) -> np.ndarray:
    states = np.atleast_2d(np.asarray(states, dtype=float))
    q1, q2, p1, p2 = states.T
    wm, wp = modal.omega
    (a, b), (c, d) = modal.phi
    v = a * q1 + b * q2
    y = c * q1 + d * q2
    return 0.5 * (p1 * p1 + p2 * p2 + wm * wm * q1 * q1 + wp * wp * q2 * q2) + 0.25 * (m3 * v**4 + n3 * y**4)


def to_complex(modal: ModalData, q, p) -> np.ndarray:
    w = np.sqrt(np.array(modal.omega))
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return (w * q + 1j * p / w) / math.sqrt(2.0)


def from_complex(modal: ModalData, z):
    w = np.sqrt(np.array(modal.omega))
    z = np.asarray(z, dtype=complex)
    return math.sqrt(2.0) * z.real / w, math.sqrt(2.0) * z.imag * w


def action_angle(z, rtol: float = 1e-12):
    """``z_j = sqrt(I_j) exp(-i phi_j)``; singular where a component vanishes."""
    z = np.asarray(z, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(z))))
    if np.any(np.abs(z) <= rtol * scale):
        raise SingularActionAngle(f"action-angle map is singular at z = {z}")
    return np.abs(z) ** 2, np.mod(-np.angle(z), 2.0 * math.pi)


def from_action_angle(actions, angles) -> np.ndarray:
    return np.sqrt(np.asarray(actions, dtype=float)) * np.exp(-1j * np.asarray(angles, dtype=float))


def action_angle_roundtrip(z) -> np.ndarray:
    return from_action_angle(*action_angle(z))


# --------------------------------------------------------------------------
# full system
# --------------------------------------------------------------------------

def default_dt(modal: ModalData) -> float:
    return 2.0 * math.pi / modal.omega_plus / STEPS_PER_PERIOD


def _sinc_h(w, h):
    """``sin(w h) / w``, equal to ``h`` for a zero frequency."""
    return math.sin(w * h) / w if w != 0 else h


def _integrate(modal, m3, n3, y0, n_steps, dt, order, output_every):
    wm, wp = modal.omega
    (a, b), (c, d) = modal.phi
    weights = composition_weights(order)
    # exact rotation of each harmonic mode over h = w_i dt
    rot = []
    for g in weights:
        h = g * dt
        rot.append((math.cos(wm * h), _sinc_h(wm, h), wm * math.sin(wm * h),
                    math.cos(wp * h), _sinc_h(wp, h), wp * math.sin(wp * h)))
    # merged kicks: half at both ends of each stage
    kicks = [0.5 * weights[0] * dt]
    for i in range(1, len(weights)):
        kicks.append(0.5 * (weights[i - 1] + weights[i]) * dt)
    kicks.append(0.5 * weights[-1] * dt)

    q1, q2, p1, p2 = map(float, y0)
    n_out = n_steps // output_every + 1
    out = np.empty((n_out, 4))
    out[0] = (q1, q2, p1, p2)
    linear = m3 == 0 and n3 == 0
    k = 1
    for step in range(1, n_steps + 1):
        for i, (cm, sm, wsm, cp, sp, wsp) in enumerate(rot):
            if not linear:
                h = kicks[i]
                v = a * q1 + b * q2
                y = c * q1 + d * q2
                fv = m3 * v * v * v
                fy = n3 * y * y * y
                p1 -= h * (a * fv + c * fy)
                p2 -= h * (b * fv + d * fy)
            q1, p1 = cm * q1 + sm * p1, cm * p1 - wsm * q1
            q2, p2 = cp * q2 + sp * p2, cp * p2 - wsp * q2
        if not linear:
            h = kicks[-1]
            v = a * q1 + b * q2
            y = c * q1 + d * q2
            fv = m3 * v * v * v
            fy = n3 * y * y * y
            p1 -= h * (a * fv + c * fy)
            p2 -= h * (b * fv + d * fy)
        if step % output_every == 0:
            out[k] = (q1, q2, p1, p2)
            if not (abs(q1) + abs(q2) + abs(p1) + abs(p2) < BLOWUP_NORM):
                raise Blowup(f"state norm exceeded {BLOWUP_NORM:g} at t = {step * dt:g}")
            k += 1
    return out


def integrate_full(system: OscillatorSystem | ModalData, q0, p0, t_end: float, dt: float | None = None,
                   *, m3: float | None = None, n3: float | None = None, order: int = 6,
                   output_every: int = 1, energy_tol: float | None = ENERGY_TOL) -> Trajectory:
    """Integrate the cubic system from modal data ``(q0, p0)`` up to ``t_end``.

    The step is a symmetric composition (default order 6) of the
    second-order splitting into the exact harmonic flow and the cubic kick.
    ``dt`` defaults to ``(2 pi / w+) / 64`` and is shrunk so that an integer
    number of steps reaches ``t_end``.  When ``energy_tol`` is not ``None``
    the relative energy error at the output times is checked against it.
    """
    if isinstance(system, OscillatorSystem):
        modal = modal_decomposition(system)
        m3 = system.cubic_v if m3 is None else m3
        n3 = system.cubic_y if n3 is None else n3
    else:
        modal = system
        m3 = m3 or 0.0
        n3 = n3 or 0.0
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    dt = default_dt(modal) if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    n_steps += (-n_steps) % output_every
    dt = t_end / n_steps
    y0 = (*map(float, q0), *map(float, p0))
    states = _integrate(modal, m3, n3, y0, n_steps, dt, order, output_every)
    times = np.arange(len(states)) * (dt * output_every)
    energy = hamiltonian(modal, m3, n3, states)
    traj = Trajectory(times, states, energy)
    if energy_tol is not None and traj.relative_drift > energy_tol:
        raise EnergyDrift(
            f"relative energy drift {traj.relative_drift:.3e} exceeds {energy_tol:g}; reduce dt"
        )
    return traj


# --------------------------------------------------------------------------
# truncated normal-form flow
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticSolution:
    """First-order multiple-scales solution ``eps z1(t, eps^2 t)``."""

    i0: tuple[float, float]
    phi0: tuple[float, float]
    epsilon: float
    a_matrix: np.ndarray
    omega: tuple[float, float]

    @classmethod
    def from_initial(cls, w0, nf: NormalForm) -> "AsymptoticSolution":
        w0 = np.asarray(w0, dtype=complex)
        eps = float(np.max(np.abs(w0)))
        i_scaled, phi0 = action_angle(w0 / eps)
        return cls(tuple(i_scaled), tuple(phi0), eps, nf.hessian, tuple(nf.omega))

    @property
    def xi(self) -> float:
        return 0.5 * math.sqrt(min(self.i0))

    def __call__(self, t) -> np.ndarray:
        """``eps z1`` at times ``t``; shape ``(len(t), 2)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rate = np.array(self.omega) + self.epsilon**2 * self.a_matrix @ np.array(self.i0)
        phase = np.array(self.phi0)[None, :] + t[:, None] * rate[None, :]
        return self.epsilon * np.sqrt(np.array(self.i0))[None, :] * np.exp(-1j * phase)


def integrate_truncated(modal: ModalData, nf: NormalForm, i0, phi0, t_end: float,
                        dt: float | None = None) -> Trajectory:
    """Closed-form flow of ``N + H4``: constant actions, angles at the nonlinear rates.

    The energy column holds the truncated Hamiltonian, which is constant.
    """
    if nf.resonant:
        raise ValueError("the truncated flow is only closed-form for the nonresonant normal form")
    dt = default_dt(modal) if dt is None else float(dt)
    n = max(1, math.ceil(t_end / dt - 1e-9))
    times = np.linspace(0.0, t_end, n + 1)
    i0 = np.asarray(i0, dtype=float)
    rate = np.array(modal.omega) + nf.hessian @ i0
    angles = np.asarray(phi0, dtype=float)[None, :] + times[:, None] * rate[None, :]
    z = from_action_angle(i0[None, :], angles)
    q, p = from_complex(modal, z)
    states = np.column_stack([q, p])
    h = float(np.dot(modal.omega, i0) + 0.5 * i0 @ nf.hessian @ i0)
    return Trajectory(times, states, np.full(len(times), h))


# --------------------------------------------------------------------------
# spectral analysis
# --------------------------------------------------------------------------

def _window(name: str, n: int) -> np.ndarray:
    if name == "hann":
        return np.hanning(n)
    if name == "flattop":
        from scipy.signal.windows import flattop

        return flattop(n)
    raise ValueError(f"unknown window {name!r}")


def dominant_frequency(signal, dt: float, window: str = "hann", band=None,
                       prominence: float = 10.0) -> float:
    """Angular frequency of the strongest spectral line of ``signal``.

    Coarse peak from a zero-padded FFT with quadratic interpolation of the
    log magnitude, then refined by maximizing the windowed discrete-time
    Fourier transform around it.  Raises :class:`SpectralAmbiguity` when a
    secondary peak in ``[w/2, 2w]`` outside the main lobe is within a factor
    ``prominence`` of the main peak.
    """
    x = np.asarray(signal, dtype=float)
    n = len(x)
    if n < 16:
        raise ValueError("signal too short")
    x = x - x.mean()
    w = _window(window, n)
    xw = x * w
    nfft = 1 << int(math.ceil(math.log2(4 * n)))
    spec = np.abs(np.fft.rfft(xw, nfft))
    freqs = 2.0 * math.pi * np.fft.rfftfreq(nfft, dt)
    df = freqs[1]
    lo_bin = max(2, int(band[0] / df)) if band else 4 * nfft // n
    hi_bin = min(len(spec) - 2, int(band[1] / df)) if band else len(spec) - 2
    kk = lo_bin + int(np.argmax(spec[lo_bin:hi_bin + 1]))
    ya, yb, yc = np.log(spec[kk - 1 : kk + 2] + 1e-300)
    denom = ya - 2 * yb + yc
    shift = 0.5 * (ya - yc) / denom if denom != 0 else 0.0
    w0 = freqs[kk] + shift * df

    t = np.arange(n) * dt

    def neg_mag(om):
        return -abs(np.dot(xw, np.exp(-1j * om * t)))

    res = minimize_scalar(neg_mag, bounds=(w0 - 2 * df, w0 + 2 * df), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, w0)})
    w_peak = float(res.x)

    # prominence test against the strongest other local maximum in the modal band
    lobe = (4.0 if window == "hann" else 10.0) * 2.0 * math.pi / (n * dt)
    sel = (freqs >= 0.5 * w_peak) & (freqs <= 2.0 * w_peak) & (np.abs(freqs - w_peak) > lobe)
    is_max = np.zeros_like(spec, dtype=bool)
    is_max[1:-1] = (spec[1:-1] >= spec[:-2]) & (spec[1:-1] >= spec[2:])
    others = spec[sel & is_max]
    if others.size and spec[kk] < prominence * others.max():
        raise SpectralAmbiguity(
            f"peak at {w_peak:.6g} is only {spec[kk] / others.max():.3g}x the next peak in its band"
        )
    return w_peak


def measure_frequencies(traj: Trajectory, window: str = "hann") -> tuple[float, float]:
    """Dominant frequencies of ``q1(t)`` and ``q2(t)``."""
    t = traj.times
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("trajectory must be uniformly sampled")
    return (
        dominant_frequency(traj.states[:, 0], steps[0], window),
        dominant_frequency(traj.states[:, 1], steps[0], window),
    )


def measure_nonlinear_frequencies(system: OscillatorSystem, q0, p0, *, periods: float = 200.0,
                                  rtol: float = 1e-6, max_doublings: int = 4, dt: float | None = None,
                                  window: str = "hann"):
    """Integrate and measure, doubling the record until the estimates settle.

    Returns ``(w_minus, w_plus, trajectory)``.
    """
    modal = modal_decomposition(system)
    t_len = periods * 2.0 * math.pi / modal.omega_minus
    traj = integrate_full(system, q0, p0, t_len, dt)
    prev = measure_frequencies(traj, window)
    for _ in range(max_doublings):
        extra = integrate_full(system, traj.states[-1, :2], traj.states[-1, 2:], traj.times[-1], traj.dt,
                               energy_tol=None)
        extra = Trajectory(extra.times + traj.times[-1], extra.states, extra.energy)
        traj = traj.concatenate(extra)
        if traj.relative_drift > ENERGY_TOL:
            raise EnergyDrift(f"relative energy drift {traj.relative_drift:.3e} exceeds {ENERGY_TOL:g}")
        cur = measure_frequencies(traj, window)
        if all(abs(c - p) <= rtol * abs(c) for c, p in zip(cur, prev)):
            return cur[0], cur[1], traj
        prev = cur
    return prev[0], prev[1], traj


# --------------------------------------------------------------------------
# normal-form coordinate change
# --------------------------------------------------------------------------

class GeneratingFlow:
    """Time-``t`` flow of ``dz_j/dt = -i dS/dzbar_j`` for a quartic ``S``.

    ``forward`` realizes the normalizing map (normal-form to original
    coordinates); ``inverse`` flows for time ``-1``.
    """

    def __init__(self, s: QuarticForm, substeps: int = PHI_S_SUBSTEPS):
        items = list(s.complex_coeffs().items())
        self.substeps = substeps
        if not items:
            self._exps = np.zeros((0, 4), dtype=int)
            self._coef = np.zeros(0, dtype=complex)
        else:
            self._exps = np.array([e for e, _ in items], dtype=int)
            self._coef = np.array([c for _, c in items], dtype=complex)

    def field(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self._coef.size == 0:
            return np.zeros(2, dtype=complex)
        zz = np.array([z[0], z[1], np.conj(z[0]), np.conj(z[1])])
        out = np.empty(2, dtype=complex)
        for j in range(2):
            e = self._exps.copy()
            mult = e[:, 2 + j].astype(float)
            e[:, 2 + j] = np.maximum(e[:, 2 + j] - 1, 0)
            mono = np.prod(zz[None, :] ** e, axis=1)
            out[j] = -1j * np.sum(self._coef * mult * mono)
        return out

    def flow(self, z, time: float = 1.0) -> np.ndarray:
        z = np.asarray(z, dtype=complex).copy()
        if self._coef.size == 0:
            return z
        h = time / self.substeps
        f = self.field
        for _ in range(self.substeps):
            k1 = f(z)
            k2 = f(z + 0.5 * h * k1)
            k3 = f(z + 0.5 * h * k2)
            k4 = f(z + h * k3)
            z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return z

    def forward(self, w) -> np.ndarray:
        return self.flow(w, 1.0)

    def inverse(self, z) -> np.ndarray:
        return self.flow(z, -1.0)


# --------------------------------------------------------------------------
# remainder verification
# --------------------------------------------------------------------------

NORM_BOUND = 7.0 / (2.0 * math.sqrt(2.0))


@dataclass
class RemainderReport:
    epsilon: float
    xi: float
    s_star: float
    r_star: float
    a_norm: float
    t_star: float
    theoretical_horizon: float
    horizon: float
    n_outputs: int
    max_norm_ratio: float
    norm_bound: float
    max_residual_ratio: float
    norm_violations: int
    residual_violations: int
    energy_drift: float
    passed: bool
    residuals: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("residuals")
        return d


def verify_remainder(system: OscillatorSystem, modal: ModalData, nf: NormalForm, q0, p0,
                     t_end: float, n_out: int = 256, dt: float | None = None) -> RemainderReport:
    """Check the norm bound and the first-order residual bound along a trajectory.

    The full trajectory is mapped to normal-form coordinates with the inverse
    of the numerically flowed coordinate change and compared with the
    first-order solution on ``|t| <= min(t_end, t_* eps^-4)``.
    """
    if nf.resonant:
        raise ValueError("remainder bounds apply to the nonresonant normal form")
    flow = GeneratingFlow(nf.s)
    z0 = to_complex(modal, q0, p0)
    w0 = flow.inverse(z0)
    eps = float(np.max(np.abs(w0)))
    if eps == 0:
        raise PreconditionFail("zero initial datum")
    limit = 2.0 / (9.0 * math.sqrt(3.0 * nf.s_star)) if nf.s_star > 0 else math.inf
    if eps > limit:
        raise PreconditionFail(f"epsilon = {eps:.6g} exceeds the smallness limit {limit:.6g}")
    xi = float(np.min(np.abs(w0))) / (2.0 * eps)
    if xi == 0:
        raise PreconditionFail("one mode is not excited; the action-angle chart is singular")
    r_star = nf.r_star
    a_mat = nf.hessian
    a_norm = float(np.max(np.sum(np.abs(a_mat), axis=1)))
    t_star = 3.0 * xi**2 / (2.0 * r_star) if r_star > 0 else math.inf
    theo = t_star * eps**-4
    horizon = min(float(t_end), theo)

    step = default_dt(modal) if dt is None else float(dt)
    per_out = max(1, math.ceil(horizon / n_out / step))
    step = horizon / (n_out * per_out)
    traj = integrate_full(system, q0, p0, horizon, step, output_every=per_out)

    first = AsymptoticSolution.from_initial(w0, nf)
    approx = first(traj.times)
    z = to_complex(modal, traj.states[:, :2], traj.states[:, 2:])
    # rounding allowance: phase error accumulates like eps_mach * w+ * t
    floor0 = 64.0 * np.finfo(float).eps * eps
    norm_ratio = np.empty(len(traj.times))
    resid_ratio = np.empty(len(traj.times))
    residuals = []
    norm_bad = resid_bad = 0
    for n, (t, zt) in enumerate(zip(traj.times, z)):
        wt = flow.inverse(zt)
        norm = float(np.max(np.abs(wt)))
        resid = float(np.max(np.abs(wt - approx[n])))
        bound = eps**5 * (eps**2 * a_norm * t + 1.0 / xi) * r_star * t
        norm_ratio[n] = norm / eps
        floor = floor0 * (1.0 + modal.omega_plus * abs(float(t)))
        resid_ratio[n] = resid / bound if bound > 0 else (0.0 if resid <= floor else math.inf)
        residuals.append((float(t), resid, bound))
        norm_bad += norm > NORM_BOUND * eps
        resid_bad += resid > bound + floor
    return RemainderReport(
        epsilon=eps,
        xi=xi,
        s_star=nf.s_star,
        r_star=r_star,
        a_norm=a_norm,
        t_star=t_star,
        theoretical_horizon=theo,
        horizon=horizon,
        n_outputs=len(traj.times),
        max_norm_ratio=float(norm_ratio.max()),
        norm_bound=NORM_BOUND,
        max_residual_ratio=float(np.max(resid_ratio[1:])) if len(resid_ratio) > 1 else 0.0,
        norm_violations=int(norm_bad),
        residual_violations=int(resid_bad),
        energy_drift=traj.relative_drift,
        passed=bool(norm_bad == 0 and resid_bad == 0),
        residuals=residuals,
    )
