"""Pseudo-spectral MHD on the large torus and the instability timescale.

The unknowns are perturbations ``(u, b)`` of the steady state ``(U_s, 0)`` on a
torus with integer periods ``T``.  Written as time derivatives::

    du/dt = P(u ^ w_s + U_s ^ w) + lap(u)/R_e  + P(j ^ b + u ^ w)
    db/dt = curl(U_s ^ b)       + lap(b)/R_m  + curl(u ^ b)

with ``w = curl u``, ``w_s = curl U_s``, ``j = curl b`` and ``P`` the Leray
projector.  The first two columns are the linearization (``-L_s`` in the
sign convention where the linearized operator appears on the left), the last
column is the nonlinearity ``Q``.  The gradient parts of the advective terms
are dropped because ``P`` annihilates them.

Grid: ``N_i = (2K+1) T_i`` points per axis, retained modes ``|n_i| <= (N_i-1)//3``
(2/3 rule), zero mean.  Diffusion is integrated exactly (integrating factor),
everything else with the classical fourth order Runge-Kutta scheme in
integrating-factor (Lawson) form.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.fft as sfft
from scipy import stats

from .bloch import assemble
from .errors import (CflViolation, HorizonExceeded, NanDetected, NonIntegerPeriod,
                     ValidationError)
from .fields import FourierVectorField, TorusSpec, norm_l2

DEFAULT_HS = 2.51


def make_big_torus(xi, epsilon, K: int = 1) -> TorusSpec:
    """``T_i = 2 pi / (eps |xi_i|)``; every period must be an integer.

    ``xi`` may be given as Fractions (components of ``xi / 2 pi``, exact) or
    as floats (angular, checked to 1e-9).
    """
    eps = Fraction(epsilon) if isinstance(epsilon, (Fraction, int, str)) else None
    periods = []
    for c in xi:
        if isinstance(c, Fraction) and eps is not None:
            if c == 0:
                raise NonIntegerPeriod("xi has a zero component")
            T = 1 / (eps * abs(c))
            if T.denominator != 1:
                raise NonIntegerPeriod(f"period {T} is not an integer")
            periods.append(int(T))
        else:
            r = float(c) / (2 * math.pi) if not isinstance(c, Fraction) else float(c)
            if r == 0:
                raise NonIntegerPeriod("xi has a zero component")
            T = 1.0 / (float(epsilon) * abs(r))
            if abs(T - round(T)) > 1e-9 * max(1.0, T):
                raise NonIntegerPeriod(f"period {T!r} is not an integer")
            periods.append(int(round(T)))
    return TorusSpec(tuple(periods), K)


def reindex(U: FourierVectorField, periods, K_big: int) -> FourierVectorField:
    """A unit-torus field seen on the torus ``periods`` (mode ``k`` -> ``T k``)."""
    if U.torus.periods != (1.0, 1.0, 1.0):
        raise ValidationError("reindex expects a unit-torus field")
    T = np.asarray(periods, dtype=int)
    out = np.zeros((3,) + (2 * K_big + 1,) * 3, dtype=complex)
    for k in U.support():
        n = T * np.asarray(k)
        if np.abs(n).max() > K_big:
            raise ValidationError(f"mode {k} does not fit the big-torus truncation")
        out[(slice(None),) + tuple(n + K_big)] = U[k]
    return FourierVectorField(TorusSpec(tuple(int(t) for t in T), K_big), out)


class SpectralBox:
    """rFFT layout, dealiasing mask and transforms for one torus/resolution."""

    def __init__(self, periods, K: int):
        T = tuple(int(t) for t in periods)
        if any(t != p for t, p in zip(T, periods)) or min(T) < 1:
            raise NonIntegerPeriod(f"periods {periods} are not positive integers")
        self.periods = T
        self.K = int(K)
        self.N = tuple((2 * self.K + 1) * t for t in T)
        self.M = tuple((n - 1) // 3 for n in self.N)
        self.volume = float(np.prod(T))
        n0 = sfft.fftfreq(self.N[0], 1.0 / self.N[0])
        n1 = sfft.fftfreq(self.N[1], 1.0 / self.N[1])
        n2 = np.arange(self.N[2] // 2 + 1)
        self.n = np.meshgrid(n0, n1, n2, indexing="ij")
        self.kappa = np.array([2 * np.pi * n / t for n, t in zip(self.n, T)])
        self.k2 = np.sum(self.kappa ** 2, axis=0)
        mask = np.ones(self.k2.shape, dtype=bool)
        for n, m in zip(self.n, self.M):
            mask &= np.abs(n) <= m
        mask &= self.k2 > 0
        self.mask = mask
        w = np.where(self.n[2] == 0, 1.0, 2.0)
        self.weight = w * mask
        self.inv_k2 = np.where(self.k2 > 0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)
        self.h = min(t / n for t, n in zip(T, self.N))
        self.torus = TorusSpec(T, max(self.M))

    # transforms ------------------------------------------------------------
    def to_grid(self, a: np.ndarray) -> np.ndarray:
        return sfft.irfftn(a, s=self.N, axes=(-3, -2, -1), norm="forward")

    def to_spec(self, g: np.ndarray) -> np.ndarray:
        return sfft.rfftn(g, axes=(-3, -2, -1), norm="forward") * self.mask

    def curl(self, a):
        k = self.kappa
        return 1j * np.stack([k[1] * a[2] - k[2] * a[1], k[2] * a[0] - k[0] * a[2],
                              k[0] * a[1] - k[1] * a[0]])

    def leray(self, a):
        return a - self.kappa * (np.sum(self.kappa * a, axis=0) * self.inv_k2)

    def divergence_defect(self, a) -> float:
        d = np.abs(np.sum(self.kappa * a, axis=0)).max()
        return float(d)

    def norm2(self, a, s: float = 0.0) -> float:
        wt = self.weight if s == 0 else self.weight * (1 + self.k2) ** s
        return float(self.volume * np.sum(wt * np.abs(a) ** 2))

    # field conversion --------------------------------------------------------
    def from_field(self, B: FourierVectorField) -> np.ndarray:
        if not B.torus.same_geometry(self.torus):
            raise ValidationError("field lives on a different torus")
        K = B.K
        out = np.zeros((3,) + self.k2.shape, dtype=complex)
        m = [min(K, mi) for mi in self.M]
        sl = [np.arange(-mi, mi + 1) for mi in m]
        i0, i1 = sl[0] % self.N[0], sl[1] % self.N[1]
        i2 = np.arange(0, m[2] + 1)
        sub = B.coeffs[:, (sl[0] + K)[:, None, None], (sl[1] + K)[None, :, None],
                       (i2 + K)[None, None, :]]
        out[:, i0[:, None, None], i1[None, :, None], i2[None, None, :]] = sub
        return out * self.mask

    def to_field(self, a: np.ndarray) -> FourierVectorField:
        K = self.torus.K
        cube = np.zeros((3,) + (2 * K + 1,) * 3, dtype=complex)
        sl = [np.arange(-m, m + 1) for m in self.M]
        i2 = np.arange(0, self.M[2] + 1)
        vals = a[:, (sl[0] % self.N[0])[:, None, None], (sl[1] % self.N[1])[None, :, None],
                 i2[None, None, :]]
        cube[:, (sl[0] + K)[:, None, None], (sl[1] + K)[None, :, None],
             (i2 + K)[None, None, :]] = vals
        # negative n2 by conjugate symmetry
        neg = np.conj(cube[:, ::-1, ::-1, ::-1])
        lower = np.arange(2 * K + 1) < K
        cube[:, :, :, lower] = neg[:, :, :, lower]
        return FourierVectorField(self.torus, cube)


@dataclass(frozen=True)
class MhdState:
    """Perturbation ``(u, b)`` on an integer-period torus."""

    u: FourierVectorField
    b: FourierVectorField
    t: float
    r_e: float
    r_m: float

    @property
    def torus(self) -> TorusSpec:
        return self.b.torus

    def norm_l2(self) -> float:
        return math.hypot(norm_l2(self.u), norm_l2(self.b))


class MhdSolver:
    """Right-hand sides and the integrating-factor RK4 step for a fixed ``U_s``."""

    def __init__(self, U_s: FourierVectorField, K: int, r_e: float, r_m: float):
        if not (r_e > 0 and r_m > 0):
            raise ValidationError("Reynolds numbers must be positive")
        self.box = SpectralBox(U_s.torus.periods, K)
        self.r_e, self.r_m = float(r_e), float(r_m)
        us = self.box.from_field(U_s)
        full = float(np.sum(np.abs(U_s.coeffs) ** 2))
        if abs(self.box.norm2(us) / self.box.volume - full) > 1e-12 * max(full, 1.0):
            raise ValidationError("U_s is not resolved by the dealiased grid")
        self.us_hat = us
        self.us = self.box.to_grid(us)
        self.ws = self.box.to_grid(self.box.curl(us))
        self.us_max = float(np.sqrt(np.sum(self.us ** 2, axis=0)).max())

    def nonlinear_terms(self, u, b, linear: bool = True, quadratic: bool = True):
        """Advective/induction parts (no diffusion), dealiased and projected."""
        box = self.box
        have_u, have_b = bool(np.any(u)), bool(np.any(b))
        if have_u:
            ug = box.to_grid(u)
            wg = box.to_grid(box.curl(u))
        terms = []
        vel = None
        if linear:
            vel = self.us
            if have_u:
                terms += [_cross(ug, self.ws), _cross(self.us, wg)]
        if quadratic:
            if have_b:
                terms.append(_cross(box.to_grid(box.curl(b)), box.to_grid(b)))
            if have_u:
                terms.append(_cross(ug, wg))
                vel = ug if vel is None else vel + ug
        du = box.leray(box.to_spec(sum(terms))) if terms else np.zeros_like(u)
        if vel is not None and have_b:
            db = box.curl(box.to_spec(_cross(vel, box.to_grid(b))))
        else:
            db = np.zeros_like(b)
        return du, db

    def diffusion(self, u, b):
        return -self.box.k2 * u / self.r_e, -self.box.k2 * b / self.r_m

    def factors(self, dt):
        """Diffusion propagators over ``dt/2`` and ``dt`` for ``u`` and ``b``."""
        hu = np.exp(-self.box.k2 * (0.5 * dt) / self.r_e)
        hb = np.exp(-self.box.k2 * (0.5 * dt) / self.r_m)
        return hu, hb, hu * hu, hb * hb

    def step(self, u, b, dt, linear=True, quadratic=True, factors=None):
        Hu, Hb, Eu, Eb = factors if factors is not None else self.factors(dt)
        N = lambda x, y: self.nonlinear_terms(x, y, linear, quadratic)  # noqa: E731
        h = 0.5 * dt
        k1u, k1b = N(u, b)
        k2u, k2b = N(Hu * (u + h * k1u), Hb * (b + h * k1b))
        k3u, k3b = N(Hu * u + h * k2u, Hb * b + h * k2b)
        k4u, k4b = N(Eu * u + dt * Hu * k3u, Eb * b + dt * Hb * k3b)
        un = Eu * u + dt / 6 * (Eu * k1u + 2 * Hu * (k2u + k3u) + k4u)
        bn = Eb * b + dt / 6 * (Eb * k1b + 2 * Hb * (k2b + k3b) + k4b)
        un, bn = self.box.leray(un), self.box.leray(bn)
        if not (np.all(np.isfinite(un)) and np.all(np.isfinite(bn))):
            raise NanDetected("non-finite coefficients after a time step")
        return un, bn

    def auto_dt(self) -> float:
        return min(0.25 * self.r_m * self.box.h ** 2, 0.1 / max(self.us_max, 1e-300))

    def cfl_limit(self, u=None) -> float:
        vmax = self.us_max
        if u is not None and np.any(u):
            vmax = float(np.sqrt(np.sum((self.us + self.box.to_grid(u)) ** 2, axis=0)).max())
        return self.box.h / max(vmax, 1e-300)

    def norm(self, u, b, s: float = 0.0) -> float:
        return math.sqrt(self.box.norm2(u, s) + self.box.norm2(b, s))


def _cross(a, b):
    return np.stack([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


# ---------------------------------------------------------------------------
# state-level API

def _solver_for(state: MhdState, U_s: FourierVectorField, K: int) -> MhdSolver:
    return MhdSolver(U_s, K, state.r_e, state.r_m)


def linearized_rhs(state: MhdState, U_s: FourierVectorField, K: int):
    """Time derivative of the linearized system (diffusion included)."""
    S = _solver_for(state, U_s, K)
    u, b = S.box.from_field(state.u), S.box.from_field(state.b)
    du, db = S.nonlinear_terms(u, b, linear=True, quadratic=False)
    Du, Db = S.diffusion(u, b)
    return S.box.to_field(du + Du), S.box.to_field(db + Db)


def nonlinear_rhs(state: MhdState, U_s: FourierVectorField, K: int):
    """The quadratic part ``Q(u, b)`` alone."""
    S = _solver_for(state, U_s, K)
    u, b = S.box.from_field(state.u), S.box.from_field(state.b)
    du, db = S.nonlinear_terms(u, b, linear=False, quadratic=True)
    return S.box.to_field(du), S.box.to_field(db)


def step(state: MhdState, U_s: FourierVectorField, K: int, dt: float,
         linear_only: bool = False, quadratic: bool = True) -> MhdState:
    S = _solver_for(state, U_s, K)
    if dt > S.cfl_limit():
        warnings.warn(f"dt={dt:.3g} exceeds the advective limit {S.cfl_limit():.3g}",
                      CflViolation, stacklevel=2)
    u, b = S.box.from_field(state.u), S.box.from_field(state.b)
    u, b = S.step(u, b, dt, linear=True, quadratic=quadratic and not linear_only)
    return MhdState(S.box.to_field(u), S.box.to_field(b), state.t + dt, state.r_e, state.r_m)


# ---------------------------------------------------------------------------
# Bloch sectors of the big torus

def sector_list(periods) -> list:
    """One representative ``s`` per pair ``{s, -s}`` of Bloch sectors ``2 pi s / T``."""
    ranges = [range(-((t - 1) // 2), t // 2 + 1) for t in periods]
    seen, out = set(), []
    for s in sorted(itertools.product(*ranges)):
        neg = tuple(((-si + (t - 1) // 2) % t) - (t - 1) // 2 for si, t in zip(s, periods))
        if neg in seen:
            continue
        seen.add(s)
        out.append(s)
    return out


def sector_operator(U: FourierVectorField, r_m: float, box: SpectralBox, s):
    """The big-torus induction operator restricted to Bloch sector ``s``.

    Unit-cell modes ``k`` are retained exactly when ``T k + s`` is a retained
    big-torus mode, so eigenvalues coincide with those of the time stepper.
    """
    T = np.asarray(box.periods)
    s = np.asarray(s)
    M = np.asarray(box.M)
    lo = np.ceil((-M - s) / T).astype(int)
    hi = np.floor((M - s) / T).astype(int)
    Kb = int(max(np.abs(lo).max(), np.abs(hi).max(), U.support_radius(), 1))
    k = np.arange(-Kb, Kb + 1)
    mask = np.ones((2 * Kb + 1,) * 3, dtype=bool)
    grids = np.meshgrid(k, k, k, indexing="ij")
    for ax in range(3):
        n = T[ax] * grids[ax] + s[ax]
        mask &= np.abs(n) <= M[ax]
    if not np.any(s):
        mask[Kb, Kb, Kb] = False
    q = 2 * np.pi * s / T
    return assemble(U, r_m, q, 1.0, Kb, mask)


def sector_spectrum(op, vectors: bool = True) -> tuple:
    """Eigenvalues (and eigenvectors) of the retained block by a dense solve."""
    keep = np.tile(op.mask.ravel(), 3)
    A = op.sparse_matrix()[keep][:, keep].toarray()
    if not vectors:
        return np.linalg.eigvals(A), None
    vals, vecs = np.linalg.eig(A)
    full = np.zeros((op.n, vecs.shape[1]), dtype=complex)
    full[keep] = vecs
    return vals, full


@dataclass
class RhoEstimate:
    rho: float
    block: str
    sector: tuple | None
    mu: complex
    sector_rates: list
    hydro_rate: float | None

    def to_dict(self) -> dict:
        return {"rho": self.rho, "block": self.block,
                "sector": list(self.sector) if self.sector is not None else None,
                "mu": {"re": self.mu.real, "im": self.mu.imag},
                "sector_rates": [{"sector": list(s), "re_mu": r, "im_mu": i}
                                 for s, r, i in self.sector_rates],
                "hydro_rate": self.hydro_rate}


def hydro_rate(U_s: FourierVectorField, K: int, r_e: float, steps: int = 200,
               dt: float | None = None) -> float:
    """Growth rate of the velocity block alone by power iteration on its time stepper."""
    S = MhdSolver(U_s, K, r_e, 1.0)
    dt = dt or S.cfl_limit() / 2
    rng = np.random.default_rng(2024)
    u = S.box.leray(S.box.mask * (rng.standard_normal((3,) + S.box.k2.shape)
                                  + 1j * rng.standard_normal((3,) + S.box.k2.shape)))
    u = S.box.to_spec(S.box.to_grid(u))
    u = S.box.leray(u)
    b = np.zeros_like(u)
    F = S.factors(dt)
    logs = []
    for _ in range(steps):
        n0 = math.sqrt(S.box.norm2(u))
        u = u / n0
        u, _ = S.step(u, b, dt, linear=True, quadratic=False, factors=F)
        logs.append(math.log(math.sqrt(S.box.norm2(u))))
    tail = logs[steps // 2:]
    return float(np.mean(tail) / dt)


def estimate_rho(U: FourierVectorField, periods, K: int, r_m: float, r_e: float,
                 include_hydro: bool = True) -> RhoEstimate:
    """Largest growth rate of the linearization on the torus ``periods``.

    ``U`` is the unit-cell flow.  The magnetic block is scanned sector by
    sector (one per conjugate pair); the velocity block by power iteration.
    """
    box = SpectralBox(periods, K)
    rates = []
    best = (-np.inf, None, 0j)
    for s in sector_list(box.periods):
        vals, _ = sector_spectrum(sector_operator(U, r_m, box, s), vectors=False)
        i = int(np.argmax(vals.real))
        rates.append((tuple(s), float(vals[i].real), float(vals[i].imag)))
        if vals[i].real > best[0] + 1e-12:
            best = (float(vals[i].real), tuple(s), complex(vals[i]))
    hr = None
    block = "magnetic"
    rho, sector, mu = best
    if include_hydro:
        Ub = reindex(U, box.periods, box.torus.K)
        hr = hydro_rate(Ub, K, r_e)
        if hr > rho:
            rho, block, sector, mu = hr, "hydrodynamic", None, complex(hr)
    return RhoEstimate(rho, block, sector, mu, rates, hr)


def sector_mode(U: FourierVectorField, r_m: float, periods, K: int, s):
    """Leading eigenpair of sector ``s`` as a real, unit-L2 big-torus field ``b``."""
    box = SpectralBox(periods, K)
    op = sector_operator(U, r_m, box, s)
    vals, vecs = sector_spectrum(op)
    i = int(np.argmax(vals.real))
    mu, v = complex(vals[i]), vecs[:, i]
    T = np.asarray(box.periods)
    Kb = op.K
    Kbig = box.torus.K
    cube = np.zeros((3,) + (2 * Kbig + 1,) * 3, dtype=complex)
    vc = v.reshape(op.shape)
    for idx in zip(*np.nonzero(op.mask)):
        k = np.asarray(idx) - Kb
        n = T * k + np.asarray(s)
        cube[(slice(None),) + tuple(n + Kbig)] += vc[(slice(None),) + idx]
    real = 0.5 * (cube + np.conj(cube[:, ::-1, ::-1, ::-1]))
    if np.linalg.norm(real) < 1e-8 * np.linalg.norm(cube):
        real = 0.5j * (cube - np.conj(cube[:, ::-1, ::-1, ::-1]))
    b = FourierVectorField(box.torus, real)
    b = b * (1.0 / norm_l2(b))
    return mu, b, op


# ---------------------------------------------------------------------------
# instability runs

@dataclass
class InstabilityRun:
    delta: float
    c0: float
    dt: float
    t: np.ndarray
    l2: np.ndarray
    hs: np.ndarray
    linear_ref: np.ndarray
    t_delta: float | None
    t_hat: float | None
    linear_only: bool = False
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["t,l2_norm,hs_norm,linear_ref_norm"]
        for row in zip(self.t, self.l2, self.hs, self.linear_ref):
            lines.append(",".join(f"{x:.17g}" for x in row))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"delta": self.delta, "t_delta": self.t_delta, "t_hat": self.t_hat,
                "c0": self.c0, "dt": self.dt, "steps": int(len(self.t) - 1),
                "linear_only": self.linear_only, **self.meta}


def _crossing(t0, t1, n0, n1, level):
    """Log-linear interpolation of the time where the norm reaches ``level``."""
    if n1 <= n0:
        return t1
    a = (math.log(level) - math.log(n0)) / (math.log(n1) - math.log(n0))
    return t0 + min(max(a, 0.0), 1.0) * (t1 - t0)


def run_instability(U_s: FourierVectorField, mode_u: FourierVectorField | None,
                    mode_b: FourierVectorField, delta: float, c0: float, horizon: float,
                    K: int, r_e: float, r_m: float, dt: float | None = None,
                    rho: float | None = None, s: float = DEFAULT_HS,
                    linear_only: bool = False, check_every: int = 50) -> InstabilityRun:
    """Integrate from ``delta * mode`` until ``||(u, b)||_L2 >= c0`` or ``horizon``.

    A linearized run from the same data is advanced alongside; ``t_hat`` is the
    first time the two differ by more than ``(delta/2) exp(rho t)``.
    """
    if not delta > 0:
        raise ValidationError("delta must be positive")
    S = MhdSolver(U_s, K, r_e, r_m)
    box = S.box
    b0 = box.from_field(mode_b)
    u0 = box.from_field(mode_u) if mode_u is not None else np.zeros_like(b0)
    n0 = S.norm(u0, b0)
    if abs(n0 - 1.0) > 1e-10:
        raise ValidationError(f"mode must have unit L2 norm, got {n0}")
    dt = float(dt or S.auto_dt())
    if dt > S.cfl_limit():
        warnings.warn(f"dt={dt:.3g} exceeds the advective limit {S.cfl_limit():.3g}",
                      CflViolation, stacklevel=2)
    F = S.factors(dt)
    u, b = delta * u0, delta * b0
    ul, bl = u.copy(), b.copy()
    ts, l2, hs, lref = [0.0], [S.norm(u, b)], [S.norm(u, b, s)], [S.norm(ul, bl)]
    t_delta = 0.0 if l2[0] >= c0 else None
    t_hat = None
    nsteps = int(math.ceil(horizon / dt - 1e-12))
    for i in range(1, nsteps + 1):
        if t_delta is not None:
            break
        u, b = S.step(u, b, dt, linear=True, quadratic=not linear_only, factors=F)
        if linear_only:
            ul, bl = u, b
        else:
            ul, bl = S.step(ul, bl, dt, linear=True, quadratic=False, factors=F)
        t = i * dt
        ts.append(t)
        l2.append(S.norm(u, b))
        hs.append(S.norm(u, b, s))
        lref.append(S.norm(ul, bl))
        if rho is not None and t_hat is None and not linear_only:
            diff = S.norm(u - ul, b - bl)
            if diff > 0.5 * delta * math.exp(rho * t):
                t_hat = t
        if l2[-1] >= c0:
            t_delta = _crossing(ts[-2], t, l2[-2], l2[-1], c0)
        if i % check_every == 0 and not linear_only and dt > S.cfl_limit(u):
            warnings.warn(f"dt={dt:.3g} exceeds the advective limit at t={t:.3g}",
                          CflViolation, stacklevel=2)
    if t_delta is None:
        warnings.warn(f"no escape before the horizon {horizon} (delta={delta})",
                      HorizonExceeded, stacklevel=2)
    meta = {"divergence_defect": max(box.divergence_defect(u), box.divergence_defect(b))}
    return InstabilityRun(float(delta), float(c0), dt, np.array(ts), np.array(l2),
                          np.array(hs), np.array(lref), t_delta, t_hat, linear_only, meta)


def log_slope(t, norms, t_min: float | None = None, t_max: float | None = None) -> float:
    """Least-squares slope of ``log ||.||`` against ``t`` on a window."""
    t = np.asarray(t, float)
    y = np.log(np.asarray(norms, float))
    sel = np.ones_like(t, dtype=bool)
    if t_min is not None:
        sel &= t >= t_min
    if t_max is not None:
        sel &= t <= t_max
    if sel.sum() < 2:
        raise ValidationError("window holds fewer than two samples")
    return float(np.polyfit(t[sel], y[sel], 1)[0])


@dataclass
class TimescaleFit:
    slope: float
    intercept: float
    r2: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2}


def fit_timescale(deltas, t_deltas) -> TimescaleFit:
    """Regression of ``t_delta`` on ``-ln delta``."""
    x = -np.log(np.asarray(deltas, float))
    y = np.asarray(t_deltas, float)
    if len(x) < 2:
        raise ValidationError("need at least two escape times")
    res = stats.linregress(x, y)
    return TimescaleFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))


def default_c0(U_s: FourierVectorField) -> float:
    return 0.1 * norm_l2(U_s)
