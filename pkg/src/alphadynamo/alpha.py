"""Alpha tensor of a periodic flow.

The corrector ``B~ = L(theta) b`` solves

    (1/R_m) Lap B~ + curl(U ^ B~) = -curl(U ^ b)

for a constant mean field ``b``, and the alpha tensor is
``alpha b = <U ^ L(theta) b>``.  Writing ``A = -Lap^{-1} curl(U ^ .)`` the
corrector equation becomes ``(1/R_m - A) B~ = A b``, which is what we factor
(the ``-Lap^{-1}`` scaling makes the condition number meaningful).  Expanding
the resolvent gives the series ``alpha = sum_n R_m^n alpha^(n+1)``.

Normalisation of :func:`alpha2`
-------------------------------
``alpha2`` returns the second order coefficient written with the kernel
``i k / |k|^2`` (integer ``k``), i.e. lengths measured in units of
``period / 2pi``.  On the unit torus the true small-``R_m`` slope is

    alpha / R_m  ->  alpha2(U) / (2 pi),

see :data:`ALPHA2_SCALE`.  With this normalisation the closed forms for the
V-fields read ``-1/(j+i)`` exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import TOL
from .errors import Diverging, NearSingular, ValidationError
from .fields import (FourierVectorField, cross, cross_cube, cross_matrix, curl,
                     cross_convolve, curl_matrix, norm_l2, pad_cube)

#: ``alpha / R_m -> alpha2 / ALPHA2_SCALE`` as ``R_m -> 0`` on the unit torus.
ALPHA2_SCALE = 2 * np.pi


@dataclass(frozen=True)
class AlphaTensor:
    alpha: np.ndarray
    r_m: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def sym(self) -> np.ndarray:
        return decompose(self.alpha)[0]

    @property
    def antisym(self) -> np.ndarray:
        return decompose(self.alpha)[1]

    @property
    def gamma(self) -> np.ndarray:
        return decompose(self.alpha)[2]

    def to_dict(self) -> dict:
        s, a, g = decompose(self.alpha)
        return {"alpha": self.alpha.tolist(), "sym": s.tolist(), "antisym": a.tolist(),
                "gamma": g.tolist(), "rm": self.r_m, "method": self.method,
                "diagnostics": self.diagnostics}


@dataclass(frozen=True)
class CorrectorSolve:
    mean_field: np.ndarray
    corrector: FourierVectorField
    residual: float
    condition: float


def decompose(alpha) -> tuple:
    """Split into symmetric part, antisymmetric part and axial vector ``gamma``.

    ``gamma`` satisfies ``antisym @ b == cross(gamma, b)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    sym = 0.5 * (alpha + alpha.T)
    anti = 0.5 * (alpha - alpha.T)
    gamma = np.array([anti[2, 1], anti[0, 2], anti[1, 0]])
    return sym, anti, gamma


def _realify(mat: np.ndarray, what: str, tol: float = TOL.algebraic) -> np.ndarray:
    scale = max(1.0, float(np.abs(mat).max()))
    imag = float(np.abs(mat.imag).max())
    if imag > tol * scale:
        raise ValidationError(f"{what} has imaginary residue {imag:.3e}")
    return mat.real.copy()


# ---------------------------------------------------------------------------
# the operator A = -Lap^{-1} curl(U ^ .)

def _inv_k2(torus):
    kappa = torus.wavevectors()
    k2 = np.sum(kappa ** 2, axis=0)
    K = torus.K
    k2[K, K, K] = np.inf
    return kappa, 1.0 / k2


def script_a_cube(u: np.ndarray, f: np.ndarray, torus) -> np.ndarray:
    kappa, ik2 = _inv_k2(torus)
    conv = cross_cube(u, f, torus.K)
    return 1j * cross(kappa, conv) * ik2


def apply_script_a(U: FourierVectorField, f: FourierVectorField) -> FourierVectorField:
    """Apply ``A f = -Lap^{-1} curl(U ^ f)``; the result always has zero mean."""
    if U.torus != f.torus:
        U = U.retruncate(f.K)
    return f.with_coeffs(script_a_cube(U.coeffs, f.coeffs, f.torus))


def script_a_matrix(U: FourierVectorField, K: int) -> sp.csr_matrix:
    """Sparse matrix of ``A`` on the full truncated space (mean row zero)."""
    torus = U.torus.with_K(K)
    u = pad_cube(U.coeffs, max(U.K, 1))
    kappa, ik2 = _inv_k2(torus)
    D = sp.diags(np.tile(ik2.ravel(), 3))
    return (D @ curl_matrix(kappa) @ cross_matrix(u, K)).tocsr()


def _zero_mean_mask(K: int) -> np.ndarray:
    n = 2 * K + 1
    mask = np.ones((3, n, n, n), dtype=bool)
    mask[:, K, K, K] = False
    return mask.ravel()


def spectral_radius(U: FourierVectorField, K: int | None = None, tol: float = 1e-10) -> float:
    """Spectral radius of the truncated ``A`` (Arnoldi iteration)."""
    K = K or U.K
    if not np.any(U.coeffs):
        return 0.0
    A = script_a_matrix(U, K)
    keep = _zero_mean_mask(K)
    A = A[keep][:, keep]
    n = A.shape[0]
    if n <= 400:
        return float(np.abs(np.linalg.eigvals(A.toarray())).max())
    v0 = np.ones(n, dtype=complex) / np.sqrt(n)
    vals = spla.eigs(A, k=6, which="LM", v0=v0, tol=tol, return_eigenvectors=False,
                     maxiter=5000)
    return float(np.abs(vals).max())


def critical_rm(U: FourierVectorField, K: int | None = None) -> float:
    """``R_m^0``: half the convergence radius ``1/rho(A)`` of the resolvent series."""
    rho = spectral_radius(U, K)
    if rho == 0:
        return np.inf
    return 0.5 / rho


def working_rm(U: FourierVectorField, K: int | None = None) -> float:
    return critical_rm(U, K) / 4


def auto_rm(U: FourierVectorField, K: int | None = None) -> float:
    """``working_rm``, or 1 when it is infinite (``A = 0``: alpha vanishes for every R_m)."""
    r = working_rm(U, K)
    return r if np.isfinite(r) else 1.0


# ---------------------------------------------------------------------------
# direct solve

#: above this many unknowns the corrector system is solved by GMRES instead of sparse LU
LU_MAX_UNKNOWNS = 2200


class CorrectorSolver:
    """Solver for ``(1/R_m - A) B~ = A b`` on zero-mean fields, reused across mean fields.

    ``method='lu'`` factors the sparse matrix (SuperLU); ``method='krylov'``
    runs GMRES to ``rtol=1e-14``, which is cheap because the system is a
    compact perturbation of ``1/R_m``.  ``'auto'`` picks LU for small systems.
    The condition number is estimated (1-norm) in both cases.
    """

    def __init__(self, U: FourierVectorField, r_m: float, K: int | None = None,
                 check_condition: bool = True, method: str = "auto"):
        if not r_m > 0:
            raise ValidationError("r_m must be positive")
        self.K = K or U.K
        self.U = U.retruncate(self.K) if U.K != self.K else U
        self.r_m = float(r_m)
        self.torus = self.U.torus
        self._keep = _zero_mean_mask(self.K)
        A = script_a_matrix(self.U, self.K)
        self._A = A
        n = int(self._keep.sum())
        M = (sp.identity(n, dtype=complex, format="csc") / self.r_m
             - A[self._keep][:, self._keep].tocsc())
        self._M = M
        if method == "auto":
            method = "lu" if n <= LU_MAX_UNKNOWNS else "krylov"
        if method not in ("lu", "krylov"):
            raise ValidationError(f"unknown method {method!r}")
        self.method = method
        self._lu = None
        self._MH = None
        if method == "lu":
            with warnings.catch_warnings():
                warnings.simplefilter("error", sp.SparseEfficiencyWarning)
                try:
                    self._lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A")
                except RuntimeError as exc:  # exactly singular
                    raise NearSingular(f"corrector system singular at R_m={r_m}: {exc}",
                                       np.inf) from exc
        self.condition = self._condition() if check_condition else float("nan")
        if check_condition and self.condition > TOL.near_singular_cond:
            raise NearSingular(
                f"corrector system condition {self.condition:.3e} at R_m={r_m}; "
                "perturb R_m", self.condition)

    def _solve_raw(self, rhs, adjoint=False):
        rhs = np.asarray(rhs, dtype=complex).ravel()
        if self._lu is not None:
            return self._lu.solve(rhs, trans="H" if adjoint else "N")
        if not np.any(rhs):
            return np.zeros_like(rhs)
        if adjoint:
            if self._MH is None:
                self._MH = self._M.conj().T.tocsr()
            M = self._MH
        else:
            M = self._M
        x, info = spla.gmres(M, rhs, rtol=1e-14, atol=0.0, restart=100, maxiter=200)
        if info != 0:
            raise NearSingular(f"GMRES failed on the corrector system at R_m={self.r_m}",
                               np.inf)
        return x

    def _condition(self) -> float:
        n = self._M.shape[0]
        inv = spla.LinearOperator((n, n), dtype=complex,
                                  matvec=lambda x: self._solve_raw(x),
                                  rmatvec=lambda x: self._solve_raw(x, adjoint=True))
        # onenormest draws from the global RNG; pin it so artifacts are reproducible
        state = np.random.get_state()
        np.random.seed(0)
        try:
            norm_inv = spla.onenormest(inv)
        finally:
            np.random.set_state(state)
        norm_m = spla.norm(self._M, 1)
        return float(norm_m * norm_inv)

    def solve(self, mean_field) -> CorrectorSolve:
        b = np.asarray(mean_field, dtype=float)
        bfield = FourierVectorField.constant(self.torus, b)
        rhs = (self._A @ bfield.coeffs.ravel())[self._keep]
        x = np.zeros(3 * self.torus.size ** 3, dtype=complex)
        x[self._keep] = self._solve_raw(rhs)
        Bt = FourierVectorField(self.torus, x.reshape(bfield.coeffs.shape))
        return CorrectorSolve(b, Bt, corrector_residual(self.U, self.r_m, b, Bt),
                              self.condition)


def corrector_residual(U, r_m, b, Bt: FourierVectorField) -> float:
    """``||(1/R_m) Lap B~ + curl(U ^ B~) + curl(U ^ b)||_L2`` via the FFT route."""
    torus = Bt.torus
    k2 = np.sum(torus.wavevectors() ** 2, axis=0)
    total = Bt + FourierVectorField.constant(torus, b)
    res = curl(cross_convolve(U, total)).coeffs - k2 * Bt.coeffs / r_m
    return norm_l2(Bt.with_coeffs(res))


def solve_corrector(U: FourierVectorField, r_m: float, mean_field) -> CorrectorSolve:
    return CorrectorSolver(U, r_m).solve(mean_field)


def alpha_direct(U: FourierVectorField, r_m: float, K: int | None = None,
                 solver: CorrectorSolver | None = None) -> AlphaTensor:
    """Alpha tensor from three corrector solves (columns ``alpha e_i``)."""
    solver = solver or CorrectorSolver(U, r_m, K)
    cols = []
    residuals = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        cs = solver.solve(e)
        residuals.append(cs.residual)
        Kc = solver.K
        cols.append(cross_cube(solver.U.coeffs, cs.corrector.coeffs, Kc)[:, Kc, Kc, Kc])
    alpha = _realify(np.array(cols).T, "alpha")
    return AlphaTensor(alpha, float(r_m), "direct",
                       {"condition": solver.condition, "residuals": residuals,
                        "K": solver.K})


# ---------------------------------------------------------------------------
# series

def alpha_series(U: FourierVectorField, r_m: float, n_terms: int,
                 K: int | None = None) -> AlphaTensor:
    """Partial sum ``sum_{n=1}^{N} R_m^n alpha^(n+1)`` by repeated application of ``A``.

    ``diagnostics['term_norms']`` holds the Frobenius norm of each term and
    ``diagnostics['iterate_norms']`` the L2 norm of ``(R_m A)^n b`` summed over
    the three basis vectors; :class:`Diverging` is raised when the latter fail
    to decrease three times in a row.
    """
    K = K or U.K
    torus = U.torus.with_K(K)
    u = pad_cube(U.coeffs, K)
    f = np.zeros((3, 3) + (torus.size,) * 3, dtype=complex)
    for i in range(3):
        f[i, i, K, K, K] = 1.0
    total = np.zeros((3, 3), dtype=complex)
    terms, term_norms, iterate_norms = [], [], []
    for n in range(1, n_terms + 1):
        f = np.array([r_m * script_a_cube(u, f[i], torus) for i in range(3)])
        iterate_norms.append(float(np.sqrt(np.sum(np.abs(f) ** 2))))
        term = np.array([cross_cube(u, f[i], K)[:, K, K, K] for i in range(3)]).T
        terms.append(term)
        term_norms.append(float(np.linalg.norm(term)))
        total = total + term
        if n >= 3 and iterate_norms[-3] <= iterate_norms[-2] <= iterate_norms[-1] \
                and iterate_norms[-1] > 0:
            raise Diverging(f"series terms stopped decreasing at n={n} (R_m={r_m})")
    alpha = _realify(total, "alpha series") if n_terms else np.zeros((3, 3))
    last = term_norms[-1] if term_norms else 0.0
    converged = bool(last <= TOL.series_stop * max(np.linalg.norm(alpha), 1e-300)) \
        if n_terms else False
    return AlphaTensor(alpha, float(r_m), f"series({n_terms})",
                       {"term_norms": term_norms, "iterate_norms": iterate_norms,
                        "converged": converged,
                        "terms": [_realify(t, "series term").tolist() for t in terms]})


def alpha2(U: FourierVectorField) -> np.ndarray:
    """Second order coefficient ``sum_k U(-k) ^ ((i k/|k|^2) ^ (U(k) ^ b))``.

    See the module docstring for the normalisation (``2 pi`` times the true
    small-``R_m`` slope on the unit torus).
    """
    torus = U.torus
    kappa, ik2 = _inv_k2(torus)
    w = 1j * kappa * ik2 * ALPHA2_SCALE
    c = U.coeffs.reshape(3, -1)
    cm = U.flip().reshape(3, -1)
    w = w.reshape(3, -1)
    keep = np.abs(c).max(axis=0) > 0
    c, cm, w = c[:, keep], cm[:, keep], w[:, keep]
    out = np.zeros((3, 3), dtype=complex)
    for i in range(3):
        b = np.zeros((3, 1))
        b[i] = 1.0
        inner = cross(c, np.broadcast_to(b, c.shape))
        out[:, i] = cross(cm, cross(w, inner)).sum(axis=1)
    return _realify(out, "alpha2")


def alpha2_tensor(U: FourierVectorField) -> AlphaTensor:
    return AlphaTensor(alpha2(U), 0.0, "alpha2", {"scale": ALPHA2_SCALE})
