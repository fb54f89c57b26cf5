"""Command line interface.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 an acceptance
check failed.  ``--config FILE`` (``key = value`` lines, keys are the long
option names with dashes or underscores) overrides values given as flags.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import alpha as alpha_mod
from .bloch import convergence_sweep, predicted_vector
from .errors import HorizonExceeded, NoUnstableBranch, NumericalError, ValidationError
from .evolution import (SpectralBox, default_c0, estimate_rho, fit_timescale, log_slope,
                        reindex, run_instability, sector_mode)
from .fields import dumps_field, field_from_dict
from .large_scale import find_xi, parse_fraction_list, predict_mode
from .perturbation import choose_deltas, perturb
from .pipeline import (PipelineConfig, StageError, dumps, load_config, load_flow,
                       parse_config_text, run_pipeline)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


def parse_eps(text: str) -> list:
    """``'2^-4..2^-9'`` or a comma list of numbers/fractions."""
    m = re.fullmatch(r"\s*2\^(-?\d+)\s*\.\.\s*2\^(-?\d+)\s*", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        step = 1 if b >= a else -1
        return [2.0 ** n for n in range(a, b + step, step)]
    try:
        return [float(Fraction(x.strip())) for x in text.split(",") if x.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"cannot parse eps list {text!r}") from exc


def _float_list(text: str) -> list:
    try:
        return [float(Fraction(x.strip())) for x in text.split(",") if x.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"cannot parse number list {text!r}") from exc


def _rm(text, U, K):
    if text is None or str(text).lower() == "auto":
        return alpha_mod.auto_rm(U, K)
    return float(Fraction(str(text)))


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def apply_config(args, parser) -> None:
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise ValidationError(f"config file {path} does not exist")
    if args.command == "pipeline":
        return
    known = {a.dest for a in parser._actions}
    raw = parse_config_text(path.read_text())
    for key, value in raw.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("command", "config", "help"):
            raise ValidationError(f"unknown config key {key!r}")
        current = getattr(args, dest, None)
        if isinstance(current, bool):
            value = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int) and not isinstance(current, bool):
            value = int(value)
        setattr(args, dest, value)


# ---------------------------------------------------------------------------
# subcommands

def cmd_alpha(args) -> int:
    U = load_flow(args.flow, args.trunc or 4)
    K = args.trunc or U.K
    if args.method == "alpha2":
        res = alpha_mod.alpha2_tensor(U)
    else:
        r_m = _rm(args.rm, U, K)
        if args.method == "direct":
            res = alpha_mod.alpha_direct(U, r_m, K)
        elif args.method == "series":
            res = alpha_mod.alpha_series(U, r_m, int(args.terms), K)
        else:
            raise ValidationError(f"unknown method {args.method!r}")
    _emit(dumps(res.to_dict()), args.out)
    return EXIT_OK


def cmd_perturb(args) -> int:
    U = load_flow(args.flow, 4)
    if args.deltas:
        plan = perturb(U, int(args.j), _float_list(args.deltas))
    else:
        plan = choose_deltas(U, int(args.j), float(Fraction(str(args.gap))))
    d = plan.to_dict()
    d["flow"] = json.loads(dumps_field(plan.perturbed))
    _emit(dumps(d), args.out)
    if args.flow_out:
        Path(args.flow_out).write_text(dumps_field(plan.perturbed))
    return EXIT_OK


def _read_alpha(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"alpha file {path} does not exist")
    d = json.loads(p.read_text())
    if "alpha" in d:
        return np.asarray(d["alpha"], float)
    if "direct" in d:
        return np.asarray(d["direct"]["alpha"], float)
    raise ValidationError("alpha file has no 'alpha' entry")


def cmd_predict(args) -> int:
    a = _read_alpha(args.alpha)
    if args.xi:
        r = parse_fraction_list(args.xi)
        mode = predict_mode(a, [2 * np.pi * float(x) for x in r], r)
    else:
        mode = find_xi(a, int(args.qmax), Fraction(str(args.scale)))
    _emit(dumps(mode.to_dict()), args.out)
    return EXIT_OK


def cmd_bloch_sweep(args) -> int:
    U = load_flow(args.flow, int(args.K))
    K = int(args.K)
    r_m = _rm(args.rm, U, K)
    r = parse_fraction_list(args.xi)
    xi = np.array([2 * np.pi * float(x) for x in r])
    al = alpha_mod.alpha_direct(U, r_m, K)
    mode = predict_mode(al, xi, r)
    v0 = predicted_vector(U, r_m, K, mode.eigenvector)
    sweep = convergence_sweep(U, r_m, xi, K, parse_eps(args.eps), mode.rate, v0=v0)
    _emit(sweep.to_csv(), args.out)
    sys.stderr.write(f"rate={mode.rate!r} slope={sweep.slope:.6g}\n")
    return EXIT_OK


def cmd_evolve(args) -> int:
    U = load_flow(args.flow, 4)
    periods = tuple(int(p) for p in _float_list(args.periods))
    K = int(args.K)
    r_m, r_e = float(Fraction(str(args.rm))), float(Fraction(str(args.re)))
    box = SpectralBox(periods, K)
    Us = reindex(U, periods, box.torus.K)
    rho = estimate_rho(U, periods, K, r_m, r_e)
    if args.mode:
        d = json.loads(Path(args.mode).read_text())
        b_mode = field_from_dict(d["b"])
        u_mode = field_from_dict(d["u"]) if d.get("u") else None
    else:
        if rho.sector is None:
            raise NoUnstableBranch("the fastest mode is hydrodynamic; pass --mode")
        _, b_mode, _ = sector_mode(U, r_m, periods, K, rho.sector)
        u_mode = None
    c0 = float(args.c0) if args.c0 not in (None, "auto") else default_c0(Us)
    dt = None if str(args.dt) == "auto" else float(args.dt)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    runs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonExceeded)
        for i, delta in enumerate(_float_list(args.delta)):
            run = run_instability(Us, u_mode, b_mode, delta, c0, float(args.horizon), K, r_e,
                                  r_m, dt=dt, rho=rho.rho, linear_only=bool(args.linear_only))
            (outdir / f"run_{i}.csv").write_text(run.to_csv())
            runs.append(run)
    ref = runs[-1]
    rho_slope = log_slope(ref.t, ref.linear_ref, 0.25 * ref.t[-1], ref.t[-1])
    esc = [(r.delta, r.t_delta) for r in runs if r.t_delta is not None]
    fit = fit_timescale(*zip(*esc)).to_dict() if len(esc) >= 2 else None
    summary = {"delta": [r.delta for r in runs], "t_delta": [r.t_delta for r in runs],
               "rho_eigen": rho.rho, "rho_slope": rho_slope, "fit": fit, "c0": c0,
               "runs": [r.summary() for r in runs]}
    (outdir / "summary.json").write_text(dumps(summary))
    sys.stdout.write(dumps(summary))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig()
    overrides = {}
    if args.flow:
        overrides["flow"] = args.flow
    if args.output:
        overrides["output"] = args.output
    text = "\n".join(f"{k} = {v}" for k, v in overrides.items())
    cfg = load_config(text, cfg)
    if args.config:
        cfg = load_config(Path(args.config).read_text(), cfg)
    rep = run_pipeline(cfg)
    sys.stdout.write(dumps(rep.to_dict()))
    return EXIT_OK if rep.passed else EXIT_ACCEPTANCE


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alphadynamo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("alpha", help="alpha tensor of a flow")
    a.add_argument("--flow", required=True, help="field JSON or preset name")
    a.add_argument("--rm", default="auto")
    a.add_argument("--method", default="direct", choices=["direct", "series", "alpha2"])
    a.add_argument("--terms", type=int, default=12)
    a.add_argument("--trunc", type=int, default=None)
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_alpha)

    b = sub.add_parser("perturb", help="add V-fields to separate alpha2 eigenvalues")
    b.add_argument("--flow", required=True)
    b.add_argument("--j", type=int, default=0)
    b.add_argument("--gap", default="0.1")
    b.add_argument("--deltas", default=None, help="explicit d1,d2,d3 instead of a search")
    b.add_argument("--out", default=None)
    b.add_argument("--flow-out", dest="flow_out", default=None)
    b.set_defaults(func=cmd_perturb)

    c = sub.add_parser("predict", help="large-scale growing mode from alpha")
    c.add_argument("--alpha", required=True, help="JSON from the alpha subcommand")
    c.add_argument("--qmax", type=int, default=8)
    c.add_argument("--scale", default="1")
    c.add_argument("--xi", default=None, help="fixed xi/(2 pi) as p/q,p/q,p/q")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_predict)

    d = sub.add_parser("bloch-sweep", help="eps -> 0 continuation of the Bloch eigenvalue")
    d.add_argument("--flow", required=True)
    d.add_argument("--rm", default="auto")
    d.add_argument("--xi", required=True, help="xi/(2 pi) as p/q,p/q,p/q")
    d.add_argument("--K", type=int, default=8)
    d.add_argument("--eps", default="2^-4..2^-9")
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_bloch_sweep)

    e = sub.add_parser("evolve", help="delta sweep of the nonlinear escape time")
    e.add_argument("--flow", required=True)
    e.add_argument("--mode", default=None, help="JSON with a 'b' field (and optional 'u')")
    e.add_argument("--delta", default="1e-3,1e-4,1e-5,1e-6")
    e.add_argument("--c0", default="auto")
    e.add_argument("--horizon", type=float, default=60.0)
    e.add_argument("--dt", default="auto")
    e.add_argument("--linear-only", dest="linear_only", action="store_true")
    e.add_argument("--periods", default="4,4,4")
    e.add_argument("--K", type=int, default=5)
    e.add_argument("--rm", default="8")
    e.add_argument("--re", default="0.1")
    e.add_argument("--out-dir", dest="out_dir", default="evolve_out")
    e.set_defaults(func=cmd_evolve)

    f = sub.add_parser("pipeline", help="run the whole chain")
    f.add_argument("--flow", default=None)
    f.add_argument("--output", default=None)
    f.set_defaults(func=cmd_pipeline)

    for sp_ in (a, b, c, d, e, f):
        sp_.add_argument("--config", default=None, help="key = value file overriding flags")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(args, parser._subparsers._group_actions[0].choices[args.command])
        return args.func(args)
    except StageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION if isinstance(exc.error, ValidationError) else EXIT_NUMERICAL
    except ValidationError as exc:
        sys.stderr.write(f"validation error: {exc}\n")
        return EXIT_VALIDATION
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
