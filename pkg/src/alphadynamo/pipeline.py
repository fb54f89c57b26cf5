"""End-to-end chain: perturb, alpha, predict, Bloch sweep, big-torus evolution.

Configuration is flat ``key = value`` text (``#`` starts a comment); unknown
keys are rejected.  Every stage writes its artifact before the next stage
starts, so a failure leaves the earlier outputs in place.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import alpha as alpha_mod
from .bloch import convergence_sweep, predicted_vector
from .errors import DynamoError, HorizonExceeded, ValidationError
from .evolution import (default_c0, estimate_rho, fit_timescale, log_slope, make_big_torus,
                        reindex, run_instability, sector_mode)
from .fields import FourierVectorField, TorusSpec, dumps_field, loads_field
from .large_scale import find_xi
from .perturbation import choose_deltas, gaps_ok, vfields

# ---------------------------------------------------------------------------
# presets

_ABC_TERMS = [(0, 2, "sin"), (0, 1, "cos"), (1, 0, "sin"), (1, 2, "cos"),
              (2, 1, "sin"), (2, 0, "cos")]


def abc_flow(K: int = 4) -> FourierVectorField:
    """``(sin z + cos y, sin x + cos z, sin y + cos x)`` at frequency ``2 pi``."""
    modes = {}
    for comp, axis, kind in _ABC_TERMS:
        for sign in (1, -1):
            k = [0, 0, 0]
            k[axis] = sign
            v = np.zeros(3, dtype=complex)
            v[comp] = 0.5 if kind == "cos" else -0.5j * sign
            modes[tuple(k)] = modes.get(tuple(k), 0) + v
    return FourierVectorField.from_modes(TorusSpec((1, 1, 1), K), modes)


_PRESET_INFO = {
    "zero": "trivially symmetric; alpha = 0",
    "abc-like": "A=B=C=1 Beltrami flow (curl u = 2 pi u), helical, isotropic alpha2",
    "vfields(j)": "sum of the three V^i(j); each V^i is Beltrami at wavenumber j+i",
}


def presets() -> dict:
    """Names and symmetry tags of the built-in flows."""
    return dict(_PRESET_INFO)


def preset_flow(name: str, K: int = 4) -> FourierVectorField:
    name = name.strip()
    if name == "zero":
        return FourierVectorField.zeros(TorusSpec((1, 1, 1), K))
    if name == "abc-like":
        return abc_flow(K)
    m = re.fullmatch(r"vfields\((\d+)\)", name)
    if m:
        j = int(m.group(1))
        return vfields(j, K=max(K, j + 3))
    raise ValidationError(f"unknown preset {name!r}; known: {', '.join(_PRESET_INFO)}")


def load_flow(source: str, K: int = 4) -> FourierVectorField:
    if source.endswith(".json"):
        p = Path(source)
        if not p.exists():
            raise ValidationError(f"flow file {source} does not exist")
        return loads_field(p.read_text())
    return preset_flow(source, K)


# ---------------------------------------------------------------------------
# configuration

def _floats(text: str) -> tuple:
    return tuple(float(Fraction(x.strip())) for x in text.split(",") if x.strip())


def _fractions(text: str) -> tuple:
    return tuple(Fraction(x.strip()) for x in text.split(",") if x.strip())


def _opt_float(text: str):
    return None if text.strip().lower() in ("auto", "none") else float(Fraction(text.strip()))


@dataclass(frozen=True)
class PipelineConfig:
    flow: str = "vfields(0)"
    j: int = 0
    gap: float | None = None
    r_m: float | None = None
    K: int = 8
    qmax: int = 8
    xi_scale: Fraction | None = None
    series_terms: int = 12
    eps_list: tuple = tuple(2.0 ** -n for n in range(4, 10))
    evolve_xi: tuple = (Fraction(1), Fraction(1), Fraction(1))
    evolve_eps: Fraction = Fraction(1, 4)
    evolve_K: int = 5
    evolve_r_m: float = 8.0
    evolve_r_e: float = 0.1
    delta_list: tuple = (1e-3, 1e-4, 1e-5, 1e-6)
    c0: float | None = None
    horizon: float = 60.0
    dt: float | None = None
    output: str = "pipeline_out"
    seed: int = 0
    tol_algebraic: float = 1e-10
    tol_iterative: float = 1e-8

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format_value(v)}")
        return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


_PARSERS = {
    "flow": str, "j": int, "gap": _opt_float, "r_m": _opt_float, "K": int, "qmax": int,
    "xi_scale": lambda t: None if t.strip().lower() == "auto" else Fraction(t.strip()),
    "series_terms": int, "eps_list": _floats, "evolve_xi": _fractions,
    "evolve_eps": lambda t: Fraction(t.strip()), "evolve_K": int,
    "evolve_r_m": lambda t: float(Fraction(t.strip())),
    "evolve_r_e": lambda t: float(Fraction(t.strip())),
    "delta_list": _floats, "c0": _opt_float, "horizon": float, "dt": _opt_float,
    "output": str, "seed": int, "tol_algebraic": float, "tol_iterative": float,
}


def parse_config_text(text: str, allowed=None) -> dict:
    """``key = value`` lines into a dict of strings (no type conversion)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if allowed is not None and key not in allowed:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    raw = parse_config_text(text, _PARSERS)
    values = {}
    for k, v in raw.items():
        try:
            values[k] = _PARSERS[k](v)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"bad value for {k}: {v!r}") from exc
    cfg = replace(base or PipelineConfig(), **values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: PipelineConfig) -> None:
    if cfg.K < 1 or cfg.evolve_K < 1 or cfg.qmax < 1 or cfg.j < 0:
        raise ValidationError("K, evolve_K, qmax must be >= 1 and j >= 0")
    if cfg.gap is not None and not cfg.gap > 0:
        raise ValidationError("gap must be positive")
    if cfg.r_m is not None and not cfg.r_m > 0:
        raise ValidationError("r_m must be positive")
    eps = list(cfg.eps_list)
    if not eps or any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
        raise ValidationError("eps_list must be positive and strictly decreasing")
    if any(d <= 0 for d in cfg.delta_list):
        raise ValidationError("delta_list entries must be positive")
    if len(cfg.evolve_xi) != 3:
        raise ValidationError("evolve_xi needs three components")
    if cfg.flow.endswith(".json") and not Path(cfg.flow).exists():
        raise ValidationError(f"flow file {cfg.flow} does not exist")


# ---------------------------------------------------------------------------
# serialization helpers

def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=1) + "\n"


class StageError(DynamoError):
    """Wraps a module error with the name of the stage that raised it."""

    def __init__(self, stage: str, error: Exception):
        super().__init__(f"[{stage}] {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error


@dataclass
class Report:
    checks: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    failed_stage: str | None = None
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.failed_stage is None and all(c["pass"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "stages": self.stages, "failed_stage": self.failed_stage,
                "error": self.error, "checks": self.checks, "artifacts": self.artifacts}


def _auto_xi_scale(mode, eps_max: float, r_m: float) -> Fraction:
    """Largest ``2^-n`` keeping the slow diffusion at ``eps_max`` below half the rate."""
    xi2 = float(np.dot(mode.xi, mode.xi))
    limit = mode.lambda_plus * r_m / (2.0 * eps_max * xi2)
    c = Fraction(1)
    while float(c) > limit:
        c /= 2
    return c


def run_pipeline(cfg: PipelineConfig) -> Report:
    validate_config(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    rep = Report()

    def write(name, text):
        (out / name).write_text(text)
        rep.artifacts.append(name)

    def check(name, ok, **info):
        rep.checks[name] = {"pass": bool(ok), **info}

    stage = "config"
    try:
        write("config.txt", cfg.to_text())
        stage = "perturb"
        U = load_flow(cfg.flow, cfg.K)
        if cfg.gap is not None:
            plan = choose_deltas(U, cfg.j, cfg.gap)
            Ut = plan.perturbed
            write("perturbation.json", dumps(plan.to_dict()))
        else:
            Ut = U
        K = max(cfg.K, Ut.support_radius())
        Ut = Ut.retruncate(K) if Ut.K != K else Ut
        write("flow.json", dumps_field(Ut))
        rep.stages.append(stage)

        stage = "alpha"
        r_m = cfg.r_m if cfg.r_m is not None else alpha_mod.auto_rm(Ut, K)
        direct = alpha_mod.alpha_direct(Ut, r_m, K)
        series = alpha_mod.alpha_series(Ut, r_m, cfg.series_terms, K)
        rel = float(np.linalg.norm(series.alpha - direct.alpha)
                    / max(np.linalg.norm(direct.alpha), 1e-300))
        # alpha2 only sees R_m -> 0; confirm the separation survives at the working R_m
        sym_eigs = np.linalg.eigvalsh(direct.sym) * alpha_mod.ALPHA2_SCALE / r_m
        sym_ok = None
        if cfg.gap is not None:
            sym_ok = gaps_ok(sym_eigs, cfg.gap / 2)
            if not sym_ok:
                warnings.warn(f"alpha^S eigenvalues {sym_eigs} (scaled by 2 pi / R_m) lose the "
                              f"requested gap {cfg.gap} at R_m={r_m:.4g}", UserWarning,
                              stacklevel=2)
        write("alpha.json", dumps({"direct": direct.to_dict(),
                                   "series": {k: v for k, v in series.to_dict().items()},
                                   "relative_difference": rel,
                                   "sym_eigenvalues_scaled": sym_eigs,
                                   "sym_gap_ok": sym_ok}))
        check("alpha_series_vs_direct", rel < cfg.tol_iterative, relative_difference=rel)
        rep.stages.append(stage)

        stage = "predict"
        probe = find_xi(direct, cfg.qmax)
        scale = cfg.xi_scale if cfg.xi_scale is not None else \
            _auto_xi_scale(probe, max(cfg.eps_list), r_m)
        mode = find_xi(direct, cfg.qmax, scale)
        write("mode.json", dumps(mode.to_dict()))
        rep.stages.append(stage)

        stage = "bloch"
        v0 = predicted_vector(Ut, r_m, K, mode.eigenvector)
        sweep = convergence_sweep(Ut, r_m, mode.xi, K, cfg.eps_list, mode.rate, v0=v0)
        write("bloch_sweep.csv", sweep.to_csv())
        errs = sweep.errors()
        check("bloch_slope", sweep.slope >= 0.8, slope=sweep.slope)
        check("bloch_positive", all(r.mu.real > 0 for r in sweep.rows),
              breakdown_epsilon=sweep.breakdown_epsilon)
        check("bloch_error_decreasing", bool(np.all(np.diff(errs) < 0)),
              errors=errs.tolist())
        rep.stages.append(stage)

        stage = "evolve"
        torus = make_big_torus(cfg.evolve_xi, cfg.evolve_eps)
        periods = tuple(int(p) for p in torus.periods)
        ekK = cfg.evolve_K
        while True:
            M = min(((2 * ekK + 1) * t - 1) // 3 for t in periods)
            if Ut.support_radius() * max(periods) <= M:
                break
            ekK += 1
        Mbig = max(((2 * ekK + 1) * t - 1) // 3 for t in periods)
        Us = reindex(Ut, periods, Mbig)
        rho = estimate_rho(Ut, periods, ekK, cfg.evolve_r_m, cfg.evolve_r_e)
        write("rho.json", dumps(rho.to_dict()))
        if rho.rho <= 0 or rho.block != "magnetic":
            check("unstable_magnetic_mode", False, rho=rho.rho, block=rho.block)
            raise _Halt()
        mu, b_mode, _ = sector_mode(Ut, cfg.evolve_r_m, periods, ekK, rho.sector)
        write("evolve_mode.json", dumps({"mu": complex(mu), "sector": list(rho.sector),
                                         "b": json.loads(dumps_field(b_mode))}))
        c0 = cfg.c0 if cfg.c0 is not None else default_c0(Us)
        t_deltas, runs = [], []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HorizonExceeded)
            for i, d in enumerate(cfg.delta_list):
                run = run_instability(Us, None, b_mode, d, c0, cfg.horizon, ekK,
                                      cfg.evolve_r_e, cfg.evolve_r_m, dt=cfg.dt, rho=rho.rho)
                write(f"evolve_run_{i}.csv", run.to_csv())
                runs.append(run)
                t_deltas.append(run.t_delta)
        ref = runs[-1]
        t_end = ref.t[-1]
        rho_slope = log_slope(ref.t, ref.linear_ref, 0.25 * t_end, t_end)
        summary = {"c0": c0, "periods": list(periods), "evolve_K": ekK,
                   "rho_eigen": rho.rho, "rho_slope": rho_slope,
                   "runs": [r.summary() for r in runs]}
        escaped = [(d, t) for d, t in zip(cfg.delta_list, t_deltas) if t is not None]
        if len(escaped) >= 2:
            fit = fit_timescale([d for d, _ in escaped], [t for _, t in escaped])
            summary["fit"] = fit.to_dict()
            check("timescale_r2", fit.r2 >= 0.99, r2=fit.r2)
            check("timescale_slope", abs(fit.slope * rho.rho - 1) <= 0.1,
                  slope=fit.slope, inverse_rho=1 / rho.rho)
        else:
            summary["fit"] = None
            check("timescale_fit", False, reason="fewer than two escapes before the horizon")
        order = sorted(escaped)
        check("t_delta_monotone", all(a[1] >= b[1] for a, b in zip(order, order[1:])))
        check("rho_consistency", abs(rho_slope - rho.rho) <= 0.01 * abs(rho.rho),
              rho_eigen=rho.rho, rho_slope=rho_slope)
        write("evolve_summary.json", dumps(summary))
        rep.stages.append(stage)
    except _Halt:
        rep.failed_stage = stage
        rep.error = "no unstable magnetic mode on the evolution torus"
    except DynamoError as exc:
        rep.failed_stage = stage
        rep.error = f"{type(exc).__name__}: {exc}"
        (out / "summary.json").write_text(dumps(rep.to_dict()))
        raise StageError(stage, exc) from exc
    (out / "summary.json").write_text(dumps(rep.to_dict()))
    return rep


class _Halt(Exception):
    pass


__all__ = ["PipelineConfig", "load_config", "run_pipeline", "presets", "preset_flow",
           "load_flow", "abc_flow", "Report", "StageError", "dumps", "parse_config_text"]
