"""Command-line front end: ``froehlich <subcommand> [options]``.

Parameter precedence, lowest to highest: ``--preset``, ``--config`` file,
individual flags (``--r_ghz`` etc.). The fully resolved set is written to
``resolved.cfg`` next to the outputs, and ``manifest.json`` lists every file
written. Floats are written with 12 significant digits.

Errors print one JSON object on stderr ``{"error": category, "message": ...,
"exit_code": n}`` and exit with that code.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .distribution import asymptotic_statistics, statistics, steady_distribution
from .errors import ConfigError, FroehlichError, UsageError
from .feasibility import FeasibilityInput, feasibility
from .masterq import (
    ROTATING_FRAME_NOTE,
    detailed_balance_coherence,
    evolve_coherence,
    linewidth,
)
from .meanfield import evolve_multimode, meanfield_steady_n0
from .params import CONFIG_KEYS, LINEAR, derive_rates, load_config, params_from_mapping, params_to_mapping, preset
from .spectra import build_lines, default_grid, sample_spectrum
from .ssa import JumpConfig, mandel_from_samples, simulate_multimode, simulate_single_mode, tv_distance
from .sweep import COLUMNS as SWEEP_COLUMNS
from .sweep import SWEEP_AXES, sweep

SUBCOMMANDS = ("steady", "evolve", "sweep", "coherence", "spectrum", "ssa", "feasibility")
FLOAT_FMT = "%.12g"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def _round(obj):
    """Round floats to 12 significant digits for JSON output."""
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(FLOAT_FMT % x)
    return obj


class _Writer:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, name):
        self.files.append(name)
        return os.path.join(self.out_dir, name)

    def table(self, name, header, rows, fmt="csv"):
        if fmt == "json":
            name = os.path.splitext(name)[0] + ".json"
            cols = {h: [_round(r[i]) for r in rows] for i, h in enumerate(header)}
            return self.json(name, cols)
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        return name

    def json(self, name, obj):
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_round(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return name

    def jsonl(self, name, objs):
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as fh:
            for o in objs:
                fh.write(json.dumps(_round(o), sort_keys=True) + "\n")
        return name

    def text(self, name, text):
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return name


# ---------------------------------------------------------------------------
# parameters


def resolve_params(args):
    base = preset(args.preset) if args.preset else None
    if args.config:
        base = params_from_mapping(load_config(args.config), base=base)
    flags = {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k) is not None}
    if flags or base is None:
        base = params_from_mapping(flags, base=base)
    return base


def _resolved_cfg_text(p) -> str:
    lines = [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in params_to_mapping(p).items()]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands; each returns (summary dict, options dict)


def _cmd_steady(p, args, w):
    dist = steady_distribution(p, args.n_max)
    rates = derive_rates(p)
    s = statistics(dist, rates)
    w.table("distribution.csv", ["n0", "P"], list(zip(dist.support, dist.probs)), args.format)
    out = s.as_dict()
    out.update(
        provenance=dist.provenance,
        N=rates.N,
        rc_ghz=rates.rc,
        tail_mass_bound=dist.tail_mass_bound,
        meanfield_n0=meanfield_steady_n0(p).n0_mean,
    )
    if p.chi > 0:
        a = asymptotic_statistics(p)
        out["asymptotic"] = {"mean": a.mean, "mandel_q": a.mandel_q, "eta": a.eta}
    w.json("stats.json", out)
    return out, {"n_max": args.n_max}


def _cmd_evolve(p, args, w):
    t_end = args.t_end if args.t_end is not None else 10.0 / p.phi
    t = np.linspace(0.0, t_end, args.points)
    ts = evolve_multimode(p, t)
    header = ["t_ns", "n0", "N"]
    cols = [ts.t, ts["n0"], ts["N"]]
    if args.modes:
        for l in range(1, p.D + 1):
            header.append(f"n_{l}")
            cols.append(ts[f"n_{l}"])
    w.table("evolve.csv", header, list(zip(*cols)), args.format)
    out = {"n0_final": float(ts["n0"][-1]), "N_final": float(ts["N"][-1]), "spectrum_kind": p.spectrum.kind}
    w.json("evolve.json", out)
    return out, {"t_end": t_end, "points": args.points, "modes": args.modes}


def _parse_values(args):
    if args.values:
        try:
            return [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"cannot parse --values {args.values!r}") from None
    if args.start is not None and args.stop is not None:
        return list(np.linspace(args.start, args.stop, args.num))
    raise UsageError("sweep needs --values or --start/--stop")


def _cmd_sweep(p, args, w):
    values = _parse_values(args)
    rows = sweep(p, args.axis, values, jobs=args.jobs, n0_source=args.n0_source)
    col = SWEEP_AXES[args.axis][1]
    w.table("sweep.csv", [col, *SWEEP_COLUMNS], [r.as_tuple() for r in rows], args.format)
    out = {"axis": args.axis, "points": len(rows)}
    return out, {"axis": args.axis, "values": values, "n0_source": args.n0_source}


def _cmd_coherence(p, args, w):
    init = detailed_balance_coherence(p)
    t_grid = None
    if args.t_end is not None:
        t_grid = np.linspace(0.0, args.t_end, args.points)
    res = evolve_coherence(p, init, t_grid)
    if t_grid is None and args.points != 201:
        res = evolve_coherence(p, init, np.linspace(0.0, res.series.t[-1], args.points))
    w.table(
        "coherence.csv",
        ["t_ns", "total_coherence_magnitude"],
        list(zip(res.series.t, res.series["total_coherence_magnitude"])),
        args.format,
    )
    lw = linewidth(p, sound_speed=args.sound_speed, n0_source=args.n0_source)
    out = {
        "gamma0_full_ghz": lw.gamma0_full,
        "gamma0_approx_ghz": lw.gamma0_approx,
        "gamma_fit_ghz": res.gamma_fit,
        "gamma_ref_ghz": res.gamma_ref,
        "lifetime_ns": lw.lifetime_ns,
        "ell_c_m": lw.coherence_length_m,
        "n0_mean": lw.n0_mean,
        "n0_source": lw.n0_source,
        "frame": ROTATING_FRAME_NOTE,
    }
    w.json("coherence.json", out)
    return out, {"t_end": args.t_end, "points": args.points, "sound_speed": args.sound_speed, "n0_source": args.n0_source}


def _cmd_spectrum(p, args, w):
    if p.spectrum.kind != LINEAR:
        raise UsageError("spectrum needs --spectrum_kind linear (mode centers)")
    lines = build_lines(p, occupations=args.occupations)
    grid = default_grid(lines, points_per_width=args.points_per_width)
    spec = sample_spectrum(lines, grid, frequency_factor=not args.no_frequency_factor)
    w.table("spectrum.csv", ["f_thz", "intensity"], list(zip(spec.frequencies, spec.intensities)), args.format)
    w.jsonl(
        "lines.jsonl",
        [{"mode": j, "center_thz": l.center, "half_width_ghz": l.half_width, "weight": l.weight} for j, l in enumerate(lines)],
    )
    out = {
        "peak_thz": spec.peak_frequency(),
        "peak_intensity": float(spec.intensities.max()),
        "median_intensity": float(np.median(spec.intensities)),
        "occupations": args.occupations,
        "label": "linear spectrum (constructed mode centers)",
    }
    w.json("spectrum.json", out)
    return out, {"occupations": args.occupations, "points_per_width": args.points_per_width,
                 "frequency_factor": not args.no_frequency_factor}


def _cmd_ssa(p, args, w):
    cfg = JumpConfig(
        seed=args.seed,
        n_trajectories=args.trajectories,
        t_burn=args.t_burn,
        t_sample=args.t_sample,
        sample_stride=args.stride,
        mode_count_override=args.modes,
        max_jumps=args.max_jumps,
        one_phonon=not args.no_one_phonon,
        two_phonon=not args.no_two_phonon,
        jobs=args.jobs,
    )
    res = simulate_multimode(p, cfg) if args.multimode else simulate_single_mode(p, cfg)
    w.table("histogram.csv", ["n0", "count"], list(enumerate(res.histogram)), args.format)
    out = {
        "model": "multimode" if args.multimode else "single-mode",
        "samples": res.n_samples,
        "jump_counts": res.jump_counts,
        "conservation_violations": res.conservation_violations,
        "truncated": res.truncated,
        "rng": res.rng_provenance,
    }
    if res.n_samples >= 1000:
        m = mandel_from_samples(res)
        out.update(mean=m.mean, mean_se=m.mean_se, mandel_q=m.mandel_q, mandel_q_se=m.mandel_q_se)
    q = p if cfg.mode_count_override is None else p.with_(D=cfg.mode_count_override)
    if args.multimode:
        out["total_number_mean"] = float(res.total_number_samples.mean()) if res.n_samples else math.nan
        out["total_number_expected"] = derive_rates(q).N
    out["tv_to_analytic"] = tv_distance(res.probabilities(), steady_distribution(q).probs)
    w.json("ssa.json", out)
    return out, {
        "trajectories": args.trajectories,
        "t_burn": args.t_burn,
        "t_sample": args.t_sample,
        "stride": args.stride,
        "multimode": args.multimode,
        "modes": args.modes,
        "max_jumps": args.max_jumps,
        "one_phonon": not args.no_one_phonon,
        "two_phonon": not args.no_two_phonon,
    }


def _cmd_feasibility(p, args, w):
    rep = feasibility(FeasibilityInput(p.r, p.omega0, args.wavelength_um, args.sigma_cm2))
    out = rep.as_dict()
    w.json("feasibility.json", out)
    return out, {"wavelength_um": args.wavelength_um, "sigma_cm2": args.sigma_cm2}


_HANDLERS = {
    "steady": _cmd_steady,
    "evolve": _cmd_evolve,
    "sweep": _cmd_sweep,
    "coherence": _cmd_coherence,
    "spectrum": _cmd_spectrum,
    "ssa": _cmd_ssa,
    "feasibility": _cmd_feasibility,
}


# ---------------------------------------------------------------------------
# argument parsing


def _common(sp):
    sp.add_argument("--config", help="key=value parameter file")
    sp.add_argument("--preset", help="built-in parameter set (bsa-280, bsa-34, lysozyme)")
    sp.add_argument("--out", default="froehlich-out", help="output directory")
    sp.add_argument("--format", choices=("csv", "json"), default="csv", help="format of tabular outputs")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    for key in CONFIG_KEYS:
        kind = str if key == "spectrum_kind" else (int if key == "D" else float)
        sp.add_argument(f"--{key}", type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="froehlich", description="Froehlich condensate kinetics and statistics")
    ap.add_argument("--version", action="version", version=f"froehlich {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sp = sub.add_parser("steady", help="stationary distribution and statistics")
    _common(sp)
    sp.add_argument("--n-max", type=int, default=None)

    sp = sub.add_parser("evolve", help="decorrelated multimode rate equations")
    _common(sp)
    sp.add_argument("--t-end", type=float, default=None, help="ns (default 10/phi)")
    sp.add_argument("--points", type=int, default=201)
    sp.add_argument("--modes", action="store_true", help="also write n_1..n_D")

    sp = sub.add_parser("sweep", help="statistics along one parameter axis")
    _common(sp)
    sp.add_argument("--axis", choices=sorted(SWEEP_AXES), default="r")
    sp.add_argument("--values", help="comma-separated values")
    sp.add_argument("--start", type=float)
    sp.add_argument("--stop", type=float)
    sp.add_argument("--num", type=int, default=11)
    sp.add_argument("--n0-source", choices=("meanfield", "distribution"), default="meanfield")

    sp = sub.add_parser("coherence", help="coherence decay and linewidth")
    _common(sp)
    sp.add_argument("--t-end", type=float, default=None, help="ns (default 2/gamma)")
    sp.add_argument("--points", type=int, default=201)
    sp.add_argument("--sound-speed", type=float, default=1500.0, help="m/s")
    sp.add_argument("--n0-source", choices=("meanfield", "distribution"), default="meanfield")

    sp = sub.add_parser("spectrum", help="fluorescence spectrum (linear mode spectrum)")
    _common(sp)
    sp.add_argument("--occupations", choices=("flat", "boltzmann"), default="flat")
    sp.add_argument("--points-per-width", type=float, default=8.0)
    sp.add_argument("--no-frequency-factor", action="store_true")

    sp = sub.add_parser("ssa", help="stochastic simulation")
    _common(sp)
    sp.add_argument("--trajectories", type=int, default=4)
    sp.add_argument("--t-burn", type=float, default=None)
    sp.add_argument("--t-sample", type=float, default=1000.0)
    sp.add_argument("--stride", type=float, default=None)
    sp.add_argument("--multimode", action="store_true")
    sp.add_argument("--modes", type=int, default=None, help="mode_count_override (D)")
    sp.add_argument("--max-jumps", type=int, default=None)
    sp.add_argument("--no-one-phonon", action="store_true")
    sp.add_argument("--no-two-phonon", action="store_true")

    sp = sub.add_parser("feasibility", help="laser power estimate")
    _common(sp)
    sp.add_argument("--wavelength-um", type=float, default=400.0)
    sp.add_argument("--sigma-cm2", type=float, default=1e-15)
    return ap


def _error(exc: FroehlichError) -> int:
    payload = {"error": exc.category, "message": str(exc), "exit_code": exc.exit_code}
    sys.stderr.write(json.dumps(payload) + "\n")
    return exc.exit_code


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if not 0 <= args.seed < 2**64:
            raise UsageError("--seed must fit in 64 unsigned bits")
        p = resolve_params(args)
        w = _Writer(args.out)
        summary, options = _HANDLERS[args.command](p, args, w)
        w.text("resolved.cfg", _resolved_cfg_text(p))
        manifest = {
            "tool": "froehlich",
            "version": __version__,
            "subcommand": args.command,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "seed": args.seed,
            "jobs": args.jobs,
            "format": args.format,
            "parameters": params_to_mapping(p),
            "options": options,
            "outputs": w.files + ["manifest.json"],
        }
        w.json("manifest.json", manifest)
        sys.stdout.write(json.dumps(_round(summary), sort_keys=True) + "\n")
        return 0
    except FroehlichError as exc:
        return _error(exc)
    except OSError as exc:
        return _error(FroehlichError(str(exc)))


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
