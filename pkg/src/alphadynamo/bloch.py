"""Two-scale (Bloch) induction operator and its small eigenvalues.

For a Bloch wavevector ``q = eps * xi`` the induction operator acting on
``exp(i q.theta) c(theta)`` with periodic ``c`` is, in Fourier variables,

    (A^eps c)(k) = i q_k ^ (U ^ c)(k) - |q_k|^2 / R_m c(k),   q_k = kappa_k + eps xi,

which is the sum ``A0 + eps A1 + eps^2 A2`` of the fast-scale induction
operator, the cross-scale coupling and the slow diffusion.  Growth rates in
the original time are the eigenvalues ``mu`` of ``A^eps`` and
``mu / eps -> lambda_+ - i zeta.gamma`` as ``eps -> 0``.

Shift-invert solves eliminate the three mean-field unknowns exactly (a 3x3
Schur complement) and treat the fluctuation block with GMRES, right
preconditioned by the inverse diffusion.  For ``K <= 4`` the operator can also
be assembled as a sparse/dense matrix, which the tests use as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .alpha import CorrectorSolver
from .errors import (BranchLoss, NoConvergence, NoUnstableBranch, SingularShift,
                     ValidationError)
from .fields import (FourierVectorField, cross, cross_matrix, cube_to_grid, curl_matrix,
                     grid_to_cube, pad_cube, support_radius)

EIG_TOL = 1e-8
EIG_MAXITER = 500
_JITTER = (1e-9, -1e-9j, 2e-9 + 2e-9j, -5e-9, 1e-8j)


class CrossConvolver:
    """``v -> P_K(U ^ v)`` for a fixed flow, caching the flow on the FFT grid."""

    def __init__(self, u: np.ndarray, K: int):
        self.K = K
        ru = support_radius(u)
        self.u = pad_cube(u, max(ru, 1))
        self.N = sfft.next_fast_len(max(ru + 2 * K + 1, 2 * K + 1))
        self.ugrid = cube_to_grid(self.u, self.N)
        self.idx = np.arange(-K, K + 1) % self.N

    def __call__(self, v: np.ndarray) -> np.ndarray:
        lead = v.shape[:-4]
        full = np.zeros(lead + (3, self.N, self.N, self.N), dtype=complex)
        i = self.idx
        full[..., i[:, None, None], i[None, :, None], i[None, None, :]] = v
        vg = sfft.ifftn(full, axes=(-3, -2, -1), norm="forward")
        ug = self.ugrid
        prod = np.stack([ug[1] * vg[..., 2, :, :, :] - ug[2] * vg[..., 1, :, :, :],
                         ug[2] * vg[..., 0, :, :, :] - ug[0] * vg[..., 2, :, :, :],
                         ug[0] * vg[..., 1, :, :, :] - ug[1] * vg[..., 0, :, :, :]], axis=-4)
        return grid_to_cube(prod, self.K)


@dataclass
class BlochOperator:
    """Truncated ``A^eps`` for a unit-torus flow ``U`` at Bloch wavevector ``eps xi``."""

    U: FourierVectorField
    r_m: float
    xi: np.ndarray
    epsilon: float
    K: int
    mask: np.ndarray | None = None

    def __post_init__(self):
        if not self.r_m > 0:
            raise ValidationError("r_m must be positive")
        self.xi = np.asarray(self.xi, dtype=float)
        self.U = self.U.retruncate(self.K) if self.U.K != self.K else self.U
        self.torus = self.U.torus
        self.kappa = self.torus.wavevectors()
        self.q = self.kappa + self.epsilon * self.xi[:, None, None, None]
        self.shape = (3,) + (self.torus.size,) * 3
        self.n = 3 * self.torus.size ** 3
        self._conv = CrossConvolver(self.U.coeffs, self.K)
        c = self.K * (self.torus.size ** 2 + self.torus.size + 1)
        self.mean_index = np.array([c, c + self.n // 3, c + 2 * self.n // 3])
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.shape[1:]:
                raise ValidationError("mask must cover the coefficient cube")

    # pieces of the expansion ------------------------------------------------
    def a0(self, v: np.ndarray) -> np.ndarray:
        k2 = np.sum(self.kappa ** 2, axis=0)
        return 1j * cross(self.kappa, self._conv(v)) - k2 * v / self.r_m

    def a1(self, v: np.ndarray) -> np.ndarray:
        xi = self.xi[:, None, None, None]
        kx = np.einsum("i,i...->...", self.xi, self.kappa)
        return 1j * cross(np.broadcast_to(xi, v.shape), self._conv(v)) \
            - 2.0 * kx * v / self.r_m

    def a2(self, v: np.ndarray) -> np.ndarray:
        return -np.dot(self.xi, self.xi) / self.r_m * v

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``A^eps v`` on a coefficient cube, using the combined symbol ``q_k``.

        With a ``mask`` the coupling acts only among retained modes; excluded
        modes get a pure decay below every retained diffusion rate.
        """
        if self.mask is None:
            q2 = np.sum(self.q ** 2, axis=0)
            return 1j * cross(self.q, self._conv(v)) - q2 * v / self.r_m
        return self.mask * (1j * cross(self.q, self._conv(v * self.mask))) \
            + self._diag_cube * v

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.apply(np.asarray(x, dtype=complex).reshape(self.shape)).ravel()

    @property
    def _diag_cube(self) -> np.ndarray:
        q2 = np.sum(self.q ** 2, axis=0)
        if self.mask is None:
            return -q2 / self.r_m
        # excluded modes are pushed below every retained diffusion rate
        return -np.where(self.mask, q2, q2 + q2.max()) / self.r_m

    def diffusion_diagonal(self) -> np.ndarray:
        return np.tile(self._diag_cube.ravel(), 3)

    def linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.n, self.n), matvec=self.matvec, dtype=complex)

    def sparse_matrix(self) -> sp.csr_matrix:
        """Assembled matrix (independent of the FFT route)."""
        C = curl_matrix(self.q) @ cross_matrix(self.U.coeffs, self.K)
        if self.mask is not None:
            P = sp.diags(np.tile(self.mask.ravel(), 3).astype(float))
            C = P @ C @ P
        return (C + sp.diags(self.diffusion_diagonal())).tocsr()

    def dense(self) -> np.ndarray:
        if self.K > 4:
            raise ValidationError("dense assembly is limited to K <= 4")
        return self.sparse_matrix().toarray()

    def divergence_defect(self, v: np.ndarray) -> float:
        """``max_k |q_k . v(k)| / ||v||``."""
        v = np.asarray(v).reshape(self.shape)
        nv = np.linalg.norm(v)
        return float(np.abs(np.einsum("i...,i...->...", self.q, v)).max() / nv) if nv else 0.0


def assemble(U, r_m, xi, epsilon, K, mask=None) -> BlochOperator:
    return BlochOperator(U, r_m, np.asarray(xi, float), float(epsilon), int(K), mask)


# ---------------------------------------------------------------------------

def _gmres(matvec, rhs, precond, tol, n, maxiter=400):
    """Right-preconditioned GMRES; returns ``x`` with ``matvec(x) ~ rhs``."""
    if not np.any(rhs):
        return np.zeros(n, dtype=complex)
    op = spla.LinearOperator((n, n), matvec=lambda z: matvec(precond * z), dtype=complex)
    z, info = spla.gmres(op, rhs, rtol=tol, atol=0.0, restart=80, maxiter=maxiter)
    if info != 0:
        raise NoConvergence(f"inner GMRES did not converge (info={info})")
    return precond * z


class ShiftedSolver:
    """Applies ``(A - sigma)^{-1}`` by exact elimination of the mean block."""

    def __init__(self, op: BlochOperator, sigma: complex, tol: float = 1e-13):
        self.op = op
        self.sigma = complex(sigma)
        self.tol = tol
        n = op.n
        keep = np.ones(n, dtype=bool)
        keep[op.mean_index] = False
        self.keep = keep
        d = op.diffusion_diagonal() - self.sigma
        self.precond = 1.0 / d[keep]
        self.nf = int(keep.sum())
        cols = []
        for c in op.mean_index:
            e = np.zeros(n, dtype=complex)
            e[c] = 1.0
            cols.append(self._shifted(e))
        cols = np.array(cols).T
        self.a00 = cols[op.mean_index]
        self.Z = np.array([self._solve_f(cols[keep, c]) for c in range(3)]).T
        RZ = np.array([self._shifted(self._embed(self.Z[:, c]))[op.mean_index]
                       for c in range(3)]).T
        self.S = self.a00 - RZ
        s = np.linalg.svd(self.S, compute_uv=False)
        if s[-1] == 0 or s[0] / s[-1] > 1e14:
            raise SingularShift(f"shift {sigma} is (numerically) an eigenvalue")

    def _shifted(self, x):
        return self.op.matvec(x) - self.sigma * x

    def _embed(self, xf, x0=None):
        x = np.zeros(self.op.n, dtype=complex)
        x[self.keep] = xf
        if x0 is not None:
            x[self.op.mean_index] = x0
        return x

    def _solve_f(self, rhs):
        return _gmres(lambda z: self._shifted(self._embed(z))[self.keep], rhs,
                      self.precond, self.tol, self.nf)

    def solve(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=complex).ravel()
        w = self._solve_f(y[self.keep])
        rw = self._shifted(self._embed(w))[self.op.mean_index]
        x0 = np.linalg.solve(self.S, y[self.op.mean_index] - rw)
        return self._embed(w - self.Z @ x0, x0)

    def linear_operator(self) -> spla.LinearOperator:
        n = self.op.n
        return spla.LinearOperator((n, n), matvec=self.solve, dtype=complex)


@dataclass
class EigenResult:
    eigenvalue: complex
    eigenvector: np.ndarray
    residual: float
    iterations: int
    target: complex = 0j


def _normalize(v):
    v = v / np.linalg.norm(v)
    i = int(np.argmax(np.abs(v)))
    return v * (abs(v[i]) / v[i])


def eigensolve_near(op: BlochOperator, target: complex, v0=None, tol: float = EIG_TOL,
                    maxiter: int = EIG_MAXITER) -> EigenResult:
    """Shift-invert power iteration for the eigenvalue of ``op`` closest to ``target``."""
    solver = None
    for jit in (0.0,) + _JITTER:
        try:
            solver = ShiftedSolver(op, target + jit * max(1.0, abs(target)))
            break
        except SingularShift:
            continue
    if solver is None:
        raise SingularShift(f"could not find a regular shift near {target}")
    if v0 is None:
        v = np.ones(op.n, dtype=complex)
    else:
        v = np.asarray(v0, dtype=complex).ravel().copy()
    v = _normalize(v)
    mu, res = complex(target), np.inf
    for it in range(1, maxiter + 1):
        v = _normalize(solver.solve(v))
        Av = op.matvec(v)
        mu = complex(np.vdot(v, Av))
        res = float(np.linalg.norm(Av - mu * v))
        if res <= tol:
            return EigenResult(mu, v, res, it, complex(target))
    raise NoConvergence(f"shift-invert iteration stalled at residual {res:.3e} "
                        f"after {maxiter} iterations (target {target})")


def eigenvalues_near(op: BlochOperator, sigma: complex, count: int = 6,
                     tol: float = 1e-10, maxiter: int = 60, converge: int | None = None):
    """``count`` eigenpairs closest to ``sigma`` by block shift-invert iteration.

    A block method is used rather than single-vector Arnoldi because the
    eigenvalue 0 of ``A^0`` is semisimple with multiplicity 3, and a Krylov
    space grown from one vector only sees one direction of that eigenspace.
    The start block is the three mean-field unit vectors plus seeded random
    columns, so results are reproducible.  Only the ``converge`` (default
    ``count``) nearest Ritz pairs must meet ``tol``; the remaining ones are
    returned as estimates together with all residuals.
    """
    converge = count if converge is None else converge
    solver = ShiftedSolver(op, sigma)
    p = count + 2
    rng = np.random.default_rng(12345)
    X = rng.standard_normal((op.n, p)) + 1j * rng.standard_normal((op.n, p))
    X[:, :3] = 0.0
    X[op.mean_index, np.arange(3)] = 1.0
    Q, _ = np.linalg.qr(X)
    for _ in range(maxiter):
        Y = np.array([solver.solve(Q[:, c]) for c in range(p)]).T
        Q, _ = np.linalg.qr(Y)
        AQ = np.array([op.matvec(Q[:, c]) for c in range(p)]).T
        vals, W = np.linalg.eig(Q.conj().T @ AQ)
        order = np.argsort(np.abs(vals - sigma))[:count]
        vals, W = vals[order], W[:, order]
        vecs = Q @ W
        vecs /= np.linalg.norm(vecs, axis=0)
        res = np.linalg.norm(AQ @ W / np.linalg.norm(Q @ W, axis=0) - vecs * vals, axis=0)
        if res[:converge].max() <= tol:
            return vals, vecs, res
    raise NoConvergence("block shift-invert iteration stalled at residual "
                        f"{res[:converge].max():.3e}")


# ---------------------------------------------------------------------------
# the kernel at eps = 0

def kernel_basis(U: FourierVectorField, r_m: float, K: int) -> np.ndarray:
    """Columns ``e_i + L(theta) e_i`` as flattened coefficient vectors."""
    solver = CorrectorSolver(U, r_m, K)
    cols = []
    for i in range(3):
        e = np.eye(3)[i]
        cs = solver.solve(e)
        v = cs.corrector.coeffs.copy()
        v[:, K, K, K] += e
        cols.append(v.ravel())
    return np.array(cols).T


@dataclass
class KernelCheck:
    eigenvalues: np.ndarray
    near_zero: int
    residuals: list
    subspace_error: float
    kernel_residual: float


def kernel_check(U: FourierVectorField, r_m: float, K: int, threshold: float = 1e-6,
                 count: int = 6, sigma: complex = 1e-3) -> KernelCheck:
    op = assemble(U, r_m, np.zeros(3), 0.0, K)
    vals, vecs, _ = eigenvalues_near(op, sigma, count, converge=3)
    small = np.abs(vals) < threshold
    basis = kernel_basis(U, r_m, K)
    Q, _ = np.linalg.qr(basis)
    residuals = []
    sub_err = 0.0
    for v in vecs[:, small].T:
        v = v / np.linalg.norm(v)
        residuals.append(float(np.linalg.norm(op.matvec(v) - np.vdot(v, op.matvec(v)) * v)))
        sub_err = max(sub_err, float(np.linalg.norm(v - Q @ (Q.conj().T @ v))))
    if small.sum():
        W, _ = np.linalg.qr(vecs[:, small])
        sub_err = max(sub_err, float(np.linalg.norm(Q - W @ (W.conj().T @ Q), axis=0).max()))
    kres = max(float(np.linalg.norm(op.matvec(b)) / np.linalg.norm(b)) for b in basis.T)
    return KernelCheck(vals, int(small.sum()), residuals, sub_err, kres)


# ---------------------------------------------------------------------------
# continuation in eps

@dataclass
class SweepRow:
    epsilon: float
    mu: complex
    residual: float
    iterations: int
    divergence_defect: float

    @property
    def mu_over_eps(self) -> complex:
        return self.mu / self.epsilon


@dataclass
class SweepResult:
    rows: list
    rate: complex
    slope: float
    intercept: float
    breakdown_epsilon: float | None
    eigenvectors: dict = field(default_factory=dict, repr=False)

    def errors(self) -> np.ndarray:
        return np.array([abs(r.mu_over_eps - self.rate) for r in self.rows])

    def to_csv(self) -> str:
        lines = ["eps,re_mu,im_mu,re_mu_over_eps,im_mu_over_eps,residual"]
        for r in self.rows:
            m = r.mu_over_eps
            lines.append(",".join(f"{x:.17g}" for x in
                                  (r.epsilon, r.mu.real, r.mu.imag, m.real, m.imag, r.residual)))
        return "\n".join(lines) + "\n"


def fit_loglog(eps, err) -> tuple:
    x = np.log(np.asarray(eps, float))
    y = np.log(np.asarray(err, float))
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def convergence_sweep(U: FourierVectorField, r_m: float, xi, K: int, eps_list,
                      rate: complex, v0=None, branch_tol: float = 1e-4,
                      keep_vectors: bool = False) -> SweepResult:
    """Follow the eigenvalue that emanates from ``eps * rate``.

    The smallest ``eps`` is solved first (target ``eps * rate``, starting
    vector ``v0``, typically the predicted kernel vector); each larger ``eps``
    starts from the previous eigenvector with a target extrapolated from
    ``mu/eps``.  Rows come back in the order of ``eps_list``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError("eps_list must be positive and strictly decreasing")
    xi = np.asarray(xi, float)
    results = {}
    vectors = {}
    prev = []
    v = v0
    for eps in sorted(eps_list):
        op = assemble(U, r_m, xi, eps, K)
        if len(prev) >= 2:
            (e1, m1), (e2, m2) = prev[-2], prev[-1]
            slope = (m2 / e2 - m1 / e1) / (e2 - e1)
            target = eps * (m2 / e2 + slope * (eps - e2))
        elif prev:
            e2, m2 = prev[-1]
            target = eps * m2 / e2
        else:
            target = eps * complex(rate)
        er = eigensolve_near(op, target, v0=v)
        if er.residual > branch_tol:
            raise BranchLoss(f"continuation lost the branch at eps={eps}", eps)
        if v is not None:
            overlap = abs(np.vdot(np.ravel(v) / np.linalg.norm(v), er.eigenvector))
            if overlap < 0.5:
                raise BranchLoss(f"eigenvector overlap {overlap:.3f} at eps={eps}", eps)
        v = er.eigenvector
        prev.append((eps, er.eigenvalue))
        results[eps] = SweepRow(eps, er.eigenvalue, er.residual, er.iterations,
                                op.divergence_defect(er.eigenvector))
        if keep_vectors:
            vectors[eps] = er.eigenvector
    rows = [results[e] for e in eps_list]
    if all(r.mu.real <= 0 for r in rows):
        raise NoUnstableBranch("no eigenvalue with positive real part along the sweep")
    bad = [r.epsilon for r in rows if r.mu.real <= 0]
    err = [abs(r.mu_over_eps - rate) for r in rows]
    if all(e > 0 for e in err) and len(rows) >= 2:
        slope, intercept = fit_loglog([r.epsilon for r in rows], err)
    else:
        slope, intercept = float("nan"), float("nan")
    return SweepResult(rows, complex(rate), slope, intercept, min(bad) if bad else None,
                       vectors)


def predicted_vector(U: FourierVectorField, r_m: float, K: int, beta) -> np.ndarray:
    """``sum_i beta_i (e_i + L e_i)``: the eps -> 0 limit of the unstable eigenvector."""
    return kernel_basis(U, r_m, K) @ np.asarray(beta, dtype=complex)


__all__ = ["BlochOperator", "assemble", "ShiftedSolver", "EigenResult", "eigensolve_near",
           "eigenvalues_near", "kernel_basis", "kernel_check", "convergence_sweep",
           "SweepResult", "SweepRow", "predicted_vector", "fit_loglog", "CrossConvolver"]

