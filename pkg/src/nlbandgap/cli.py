"""Command-line front end.

Usage::

    nlbandgap dispersion --params 0.09,8 --n3 -1e4 --out run/
    nlbandgap sweep --grid 16x16 --n3 -1e4 --out run/
    nlbandgap resonance --params 0.146,2 --out run/
    nlbandgap amplitudes --grid 32x32 --mode resonant --out run/
    nlbandgap verify --params 0.09,8 --n3 -1e4 --out run/

Every command also accepts ``--config FILE`` (``key = value`` lines) and
``--profile NAME`` for the bundled figure presets; explicit flags win over
the file, which wins over the profile.  Output is CSV with 17 significant
digits plus a JSON summary, written deterministically.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bandgap import (
    AmplitudePolicy,
    FixedAmplitudes,
    bandgap_sweep,
    default_threads,
    nonlinear_bandgap,
)
from .errors import NlBandgapError, PreconditionFail
from .normal_form import (
    actions_from_amplitudes,
    admissible_amplitudes,
    build_normal_form,
    nonlinear_frequencies,
    s_norm_arrays,
    admissible_amplitude_arrays,
)
from .resonance import (
    DEFAULT_RECT,
    boundary_crossings,
    crossings_to_rows,
    curves_to_rows,
    trace_k_resonant_curves,
    trace_x_resonant_curve,
    x_detuning,
)
from .simulator import (
    integrate_full,
    measure_nonlinear_frequencies,
    verify_remainder,
)
from .system import (
    MASS_CONVENTIONS,
    X_POINT,
    HoneycombParams,
    boundary_point,
    boundary_samples,
    build_honeycomb,
    honeycomb_frequencies,
    modal_decomposition,
)

EXIT_OK = 0
EXIT_GATE = 1
EXIT_CONFIG = 2

LINEAR_T_END = 100.0

DEFAULTS = {
    "m_tilde": "0.09",
    "k_tilde": "8",
    "n3": "-1e4",
    "mass_convention": "relative",
    "grid": "16x16",
    "rect": "0.05,0.3,1,20",
    "mode": "nonresonant",
    "amplitudes": "x_admissible",
    "a_minus": "0.001",
    "a_plus": "0.001",
    "delta": str(2.0 / 3.0),
    "samples_per_edge": "2048",
    "step": "0.05",
    "k_grid": "400",
    "t_end": "1e4",
    "amplitude_fraction": "0.5",
    "frequency_fractions": "1,0.5,0.25",
    "seed": "0",
}

PROFILES = {
    "fig3": {"command": "sweep", "n3": "-1e4", "grid": "16x16"},
    "fig5": {"command": "amplitudes", "n3": "-1e4", "grid": "32x32", "mode": "nonresonant"},
    "fig9": {"command": "dispersion", "m_tilde": "0.09", "k_tilde": "8", "n3": "0"},
    "fig10": {"command": "dispersion", "m_tilde": "0.09", "k_tilde": "8", "n3": "-1e4"},
    "fig11": {"command": "dispersion", "m_tilde": "0.09", "k_tilde": "8", "n3": "1e4"},
    "fig13": {"command": "amplitudes", "n3": "-1e4", "grid": "32x32", "mode": "resonant"},
}

VALUE_FLAGS = ("--n3", "--params")

COMMANDS = ("dispersion", "sweep", "resonance", "amplitudes", "verify")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def read_config_file(path) -> dict:
    text = Path(path).read_text()
    if not any(line.strip().startswith("[") for line in text.splitlines()):
        text = "[run]\n" + text
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    merged = {}
    for section in parser.sections():
        merged.update(parser[section])
    unknown = set(merged) - set(DEFAULTS) - {"command", "threads"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return merged


def _float(cfg, key, lo=-math.inf, hi=math.inf, open_lo=False):
    try:
        value = float(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from None
    if not math.isfinite(value) or value < lo or value > hi or (open_lo and value == lo):
        bracket = "(" if open_lo else "["
        raise ConfigError(f"{key} = {value!r} outside admissible range {bracket}{lo}, {hi}]")
    return value


def _grid(cfg, minimum=2):
    text = cfg["grid"].lower().replace("×", "x")
    try:
        nm, nk = (int(v) for v in text.split("x"))
    except ValueError:
        raise ConfigError(f"grid: expected NxM, got {cfg['grid']!r}") from None
    if nm < minimum or nk < minimum:
        raise ConfigError(f"grid = {nm}x{nk} below the minimum {minimum}x{minimum}")
    return nm, nk


def _rect(cfg):
    try:
        m0, m1, k0, k1 = (float(v) for v in cfg["rect"].split(","))
    except ValueError:
        raise ConfigError(f"rect: expected m0,m1,k0,k1, got {cfg['rect']!r}") from None
    if not (0 < m0 < m1 and 0 < k0 < k1):
        raise ConfigError(f"rect = {cfg['rect']!r} must satisfy 0 < m0 < m1 and 0 < k0 < k1")
    return (m0, m1), (k0, k1)


def _params(cfg) -> HoneycombParams:
    if cfg["mass_convention"] not in MASS_CONVENTIONS:
        raise ConfigError(f"mass_convention must be one of {MASS_CONVENTIONS}")
    return HoneycombParams(
        modal_mass=_float(cfg, "m_tilde", 0.0, open_lo=True),
        modal_stiffness=_float(cfg, "k_tilde", 0.0, open_lo=True),
        cubic=_float(cfg, "n3"),
        mass_convention=cfg["mass_convention"],
    )


def _policy(cfg):
    kind = cfg["amplitudes"]
    delta = _float(cfg, "delta", 0.0, 1.0, open_lo=True)
    if kind == "x_admissible":
        return AmplitudePolicy(delta=delta)
    if kind == "per_k":
        return AmplitudePolicy(delta=delta, per_k=True)
    if kind == "fixed":
        return FixedAmplitudes(_float(cfg, "a_minus", 0.0), _float(cfg, "a_plus", 0.0))
    raise ConfigError("amplitudes must be one of x_admissible, per_k, fixed")


def _mode(cfg) -> bool:
    if cfg["mode"] not in ("nonresonant", "resonant"):
        raise ConfigError("mode must be nonresonant or resonant")
    return cfg["mode"] == "resonant"


def build_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.profile:
        profile = dict(PROFILES[args.profile])
        expected = profile.pop("command")
        if expected != args.command:
            raise ConfigError(f"profile {args.profile} belongs to the {expected!r} command")
        cfg.update(profile)
    if args.config:
        cfg.update(read_config_file(args.config))
        cfg.pop("command", None)
    if args.params:
        try:
            m, k = args.params.split(",")
        except ValueError:
            raise ConfigError(f"--params: expected M,K, got {args.params!r}") from None
        cfg["m_tilde"], cfg["k_tilde"] = m, k
    for key in ("grid", "n3", "mode"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = str(value)
    if getattr(args, "fraction", None) is not None:
        cfg["amplitude_fraction"] = str(args.fraction)
    return cfg


def _threads(args, cfg) -> int:
    if args.threads is not None:
        n = args.threads
    elif "threads" in cfg:
        n = int(cfg["threads"])
    else:
        n = default_threads()
    if n < 1:
        raise ConfigError("threads must be >= 1")
    return n


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_dispersion(cfg, out: Path, threads: int) -> int:
    params = _params(cfg)
    n = int(_float(cfg, "samples_per_edge", 3))
    report = nonlinear_bandgap(params, _policy(cfg), n)
    prof = report.profile
    write_csv(
        out / "dispersion.csv",
        ("s", "k1", "k2", "omega_minus", "omega_plus", "omega_minus_nl", "omega_plus_nl", "excluded_flag"),
        zip(prof.s, prof.k1, prof.k2, prof.omega_minus, prof.omega_plus,
            prof.omega_minus_nl, prof.omega_plus_nl, prof.excluded),
    )
    write_json(out / "dispersion_summary.json", {
        "m_tilde": params.modal_mass,
        "k_tilde": params.modal_stiffness,
        "n3": params.cubic,
        "w_linear": report.w_linear,
        "w_nonlinear": report.w_nonlinear,
        "b_per": report.b_per,
        "good": report.good,
        "argmax_acoustic": list(report.argmax_acoustic),
        "argmin_optical": list(report.argmin_optical),
        "resonant_exclusions": [list(iv) for iv in report.resonant_exclusions],
    })
    return EXIT_OK


def cmd_sweep(cfg, out: Path, threads: int) -> int:
    grid = _grid(cfg)
    rect = _rect(cfg)
    base = _params(cfg)
    n = int(_float(cfg, "samples_per_edge", 3))
    res = bandgap_sweep(rect, grid, base.cubic, template=base, amp_policy=_policy(cfg),
                        n_samples=n, threads=threads)
    write_csv(out / "sweep.csv", ("m_tilde", "k_tilde", "w_lin", "w_nl", "b_per", "good_flag"), res.rows())
    good = res.good
    summary = {
        "grid": list(grid),
        "rect": [list(rect[0]), list(rect[1])],
        "n3": base.cubic,
        "good_cells": int(good.sum()),
        "bad_cells": int((~good).sum()),
    }
    for label, mask in (("good", good), ("all", np.ones_like(good))):
        if mask.any():
            masked = np.where(mask, res.b_per, np.nan)
            for kind, fn in (("max", np.nanargmax), ("min", np.nanargmin)):
                idx = np.unravel_index(fn(masked), masked.shape)
                summary[f"{kind}_b_per_{label}"] = {
                    "b_per": float(res.b_per[idx]),
                    "m_tilde": float(res.m_tilde[idx]),
                    "k_tilde": float(res.k_tilde[idx]),
                    "above_x_curve": bool(res.sigma_x[idx] < 0),
                }
    write_json(out / "sweep_summary.json", summary)
    return EXIT_OK


def cmd_resonance(cfg, out: Path, threads: int) -> int:
    params = _params(cfg)
    rect = _rect(cfg)
    step = _float(cfg, "step", 0.0, open_lo=True)
    curve = trace_x_resonant_curve(rect, step, template=params)
    write_csv(out / "x_resonant_curve.csv", ("x", "y", "component_id"), curves_to_rows([curve]))
    k_curves = trace_k_resonant_curves(params, grid=int(_float(cfg, "k_grid", 8)))
    write_csv(out / "k_resonant_curves.csv", ("x", "y", "component_id"), curves_to_rows(k_curves))
    crossings = boundary_crossings(params)
    write_csv(out / "boundary_crossings.csv", ("s", "k1", "k2", "sigma_residual"), crossings_to_rows(crossings))
    write_json(out / "resonance_summary.json", {
        "m_tilde": params.modal_mass,
        "k_tilde": params.modal_stiffness,
        "sigma_at_x": float(x_detuning(params.modal_mass, params.modal_stiffness, params)),
        "x_curve_points": len(curve),
        "k_curves": len(k_curves),
        "crossings": len(crossings),
        "crossing_multiplicities": [c.multiplicity for c in crossings],
    })
    return EXIT_OK


def _amplitude_cell(args):
    m, k, base = args
    wm, wp, phi = honeycomb_frequencies(X_POINT.k1, X_POINT.k2, _replace(base, m, k))
    row = [m, k]
    for resonant in (False, True):
        s1, s2 = s_norm_arrays(wm, wp, phi, 0.0, base.cubic, resonant)
        with np.errstate(divide="ignore"):
            am, ap = admissible_amplitude_arrays(wm, wp, max(float(s1), float(s2)))
        row += [float(am), float(ap)]
    return row


def _replace(base: HoneycombParams, m, k):
    import dataclasses

    return dataclasses.replace(base, modal_mass=float(m), modal_stiffness=float(k))


def cmd_amplitudes(cfg, out: Path, threads: int) -> int:
    grid = _grid(cfg)
    (m0, m1), (k0, k1) = _rect(cfg)
    base = _params(cfg)
    resonant = _mode(cfg)
    ms = np.linspace(m0, m1, grid[0])
    ks = np.linspace(k0, k1, grid[1])
    cells = [(m, k, base) for m in ms for k in ks]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_amplitude_cell, cells))
    else:
        rows = [_amplitude_cell(c) for c in cells]
    write_csv(out / "amplitudes_grid.csv",
              ("m_tilde", "k_tilde", "a_minus_nonres", "a_plus_nonres", "a_minus_res", "a_plus_res"), rows)

    s = boundary_samples(int(_float(cfg, "samples_per_edge", 3)))
    k1, k2 = boundary_point(s)
    wm, wp, phi = honeycomb_frequencies(k1, k2, base)
    s1, s2 = s_norm_arrays(wm, wp, phi, 0.0, base.cubic, resonant)
    with np.errstate(divide="ignore", invalid="ignore"):
        am, ap = admissible_amplitude_arrays(wm, wp, np.maximum(s1, s2))
    write_csv(out / "amplitude_profile.csv", ("s", "k1", "k2", "a_minus", "a_plus"), zip(s, k1, k2, am, ap))

    x = _amplitude_cell((base.modal_mass, base.modal_stiffness, base))
    write_json(out / "amplitudes_summary.json", {
        "mode": cfg["mode"],
        "grid": list(grid),
        "at_params": {
            "m_tilde": base.modal_mass,
            "k_tilde": base.modal_stiffness,
            "nonresonant": {"a_minus": x[2], "a_plus": x[3]},
            "resonant": {"a_minus": x[4], "a_plus": x[5]},
        },
    })
    return EXIT_OK


def cmd_verify(cfg, out: Path, threads: int) -> int:
    params = _params(cfg)
    system = build_honeycomb(X_POINT, params)
    modal = modal_decomposition(system)
    nf = build_normal_form(modal, 0.0, params.cubic)
    if nf.s_star > 0:
        base = admissible_amplitudes(modal, nf.s_star, _float(cfg, "delta", 0.0, 1.0, open_lo=True))
        base = (base.a_minus, base.a_plus)
    else:
        base = (_float(cfg, "a_minus", 0.0), _float(cfg, "a_plus", 0.0))
    frac = _float(cfg, "amplitude_fraction", 0.0, open_lo=True)
    t_end = _float(cfg, "t_end", 0.0, open_lo=True)
    if nf.r_star == 0:
        # linear flow: no natural horizon, keep the run short
        t_end = min(t_end, LINEAR_T_END)
    report = {"m_tilde": params.modal_mass, "k_tilde": params.modal_stiffness, "n3": params.cubic,
              "admissible_amplitudes": list(base), "amplitude_fraction": frac}
    gates = {}

    q0 = (frac * base[0], frac * base[1])
    try:
        rem = verify_remainder(system, modal, nf, q0, (0.0, 0.0), t_end)
    except PreconditionFail as exc:
        report["remainder"] = {"error": f"PreconditionFail: {exc}"}
        report["passed"] = False
        write_json(out / "verify_report.json", report)
        print(f"error: PreconditionFail: {exc}", file=sys.stderr)
        return EXIT_GATE
    report["remainder"] = rem.to_dict()
    gates["remainder_bounds"] = rem.passed
    gates["remainder_energy"] = rem.energy_drift <= 1e-9
    write_csv(out / "remainder_residuals.csv", ("t", "residual", "bound"), rem.residuals)

    fractions = [float(v) for v in cfg["frequency_fractions"].split(",")]
    freq = []
    for f in fractions:
        a = (f * base[0], f * base[1])
        wm, wp, traj = measure_nonlinear_frequencies(build_honeycomb(X_POINT, params), a, (0.0, 0.0))
        pred = nonlinear_frequencies(modal, 0.0, params.cubic, *actions_from_amplitudes(modal, *a))
        shift = (pred[0] - modal.omega_minus, pred[1] - modal.omega_plus)
        resid = (wm - pred[0], wp - pred[1])
        freq.append({
            "fraction": f,
            "measured": [wm, wp],
            "predicted": list(pred),
            "residual": list(resid),
            "relative_residual": [abs(r) / abs(s) if s else 0.0 for r, s in zip(resid, shift)],
            "energy_drift": traj.relative_drift,
            "t_end": float(traj.times[-1]),
        })
        gates[f"energy_fraction_{f:g}"] = traj.relative_drift <= 1e-9
    report["frequencies"] = freq
    if params.cubic != 0:
        top = max(freq, key=lambda r: r["fraction"])
        gates["frequency_match"] = all(r <= 0.15 for r in top["relative_residual"])
        halves = [r for r in freq if math.isclose(r["fraction"], 0.5 * top["fraction"])]
        if halves:
            shrink = [abs(a) / abs(b) if b else math.inf for a, b in zip(top["residual"], halves[0]["residual"])]
            report["residual_shrink"] = shrink
            gates["residual_shrink"] = all(s >= 3.0 for s in shrink)
    else:
        gates["frequency_match"] = all(abs(r) <= 1e-6 for row in freq for r in row["residual"])

    traj = integrate_full(system, q0, (0.0, 0.0), min(t_end, 100.0))
    write_csv(out / "trajectory.csv", ("t", "q1", "q2", "p1", "p2", "energy"), traj.rows())
    gates["trajectory_energy"] = traj.relative_drift <= 1e-9

    report["gates"] = gates
    report["passed"] = all(gates.values())
    write_json(out / "verify_report.json", report)
    return EXIT_OK if report["passed"] else EXIT_GATE


HANDLERS = {
    "dispersion": cmd_dispersion,
    "sweep": cmd_sweep,
    "resonance": cmd_resonance,
    "amplitudes": cmd_amplitudes,
    "verify": cmd_verify,
}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--profile", choices=sorted(PROFILES), help="figure preset")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--grid", help="parameter grid as NxM")
    common.add_argument("--n3", type=float, help="cubic resonator coefficient")
    common.add_argument("--params", help="resonator modal mass and stiffness as M,K")
    common.add_argument("--mode", choices=("nonresonant", "resonant"))
    common.add_argument("--threads", type=int, help="worker threads (env NLBANDGAP_THREADS)")

    parser = argparse.ArgumentParser(
        prog="nlbandgap",
        description="Birkhoff normal forms and nonlinear bandgaps of a honeycomb metamaterial.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("dispersion", parents=[common], help="boundary dispersion curves and bandgap")
    sub.add_parser("sweep", parents=[common], help="bandgap gain over a parameter grid")
    sub.add_parser("resonance", parents=[common], help="3:1 resonant curves and crossings")
    sub.add_parser("amplitudes", parents=[common], help="admissible amplitude fields")
    p = sub.add_parser("verify", parents=[common], help="simulation checks of the normal form")
    p.add_argument("--fraction", type=float, help="amplitude fraction for the remainder check")
    return parser


def _attach_values(argv):
    """Glue ``--n3 -1e4`` into ``--n3=-1e4`` so argparse keeps negative values."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_values(argv))
    try:
        cfg = build_config(args)
        threads = _threads(args, cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, out, threads)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NlBandgapError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GATE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
