"""Homogenized 3x3 eigenproblem ``i xi ^ (alpha b) = lambda b``.

In the frame ``P`` diagonalizing the symmetric part ``alpha^S = P D P^T`` the
matrix ``A^zeta D`` (``zeta = P^T xi``) has eigenvalues ``0, +lambda_+,
-lambda_+`` with ``lambda_+^2 = zeta_1^2 a_2 a_3 + zeta_2^2 a_3 a_1 +
zeta_3^2 a_1 a_2``.  Eigenvectors for nonzero eigenvalues satisfy
``zeta . beta = 0``, so the antisymmetric part ``gamma' ^ .`` only adds the
drift ``-i zeta . gamma'`` and the growing rate is ``lambda_+ - i zeta . gamma'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .alpha import AlphaTensor, decompose
from .config import TOL
from .errors import DegenerateAlpha, NoViableXi, OutsideCone, ValidationError
from .fields import skew

TWO_PI = 2.0 * math.pi


def a_xi(xi) -> np.ndarray:
    """Matrix of ``b -> i xi ^ b``."""
    return 1j * skew(np.asarray(xi, dtype=float))


def diagonalize_sym(s, sweeps: int = 50):
    """Cyclic Jacobi diagonalization of a real symmetric 3x3 matrix.

    Returns ``(P, alphas)`` with ``P^T s P = diag(alphas)``, eigenvalues in
    descending order, the first nonzero entry of columns 1 and 2 positive and
    column 3 oriented so that ``det P = +1``.
    """
    a = np.array(s, dtype=float)
    if a.shape != (3, 3):
        raise ValidationError("expected a 3x3 matrix")
    if np.abs(a - a.T).max() > TOL.algebraic * max(1.0, np.abs(a).max()):
        raise ValidationError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    V = np.eye(3)
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    for _ in range(sweeps):
        off = math.sqrt(sum(a[p, q] ** 2 for p, q in ((0, 1), (0, 2), (1, 2))))
        if off <= 1e-17 * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            if a[p, q] == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            sn = t * c
            J = np.eye(3)
            J[p, p] = J[q, q] = c
            J[p, q] = sn
            J[q, p] = -sn
            a = J.T @ a @ J
            V = V @ J
    vals = np.diag(a).copy()
    order = sorted(range(3), key=lambda i: -vals[i])
    vals, V = vals[order], V[:, order]
    for c in range(3):
        nz = np.flatnonzero(np.abs(V[:, c]) > 1e-14)
        if V[nz[0], c] < 0:
            V[:, c] = -V[:, c]
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    return V, vals


def _s_value(zeta, alphas) -> float:
    z = np.asarray(zeta, float)
    a1, a2, a3 = (float(x) for x in alphas)
    return float(z[0] ** 2 * a2 * a3 + z[1] ** 2 * a3 * a1 + z[2] ** 2 * a1 * a2)


def lambda_pm(zeta, alphas):
    """``(+sqrt(S), -sqrt(S))``; complex (purely imaginary) when ``S < 0``."""
    S = _s_value(zeta, alphas)
    r = complex(math.sqrt(S)) if S >= 0 else 1j * math.sqrt(-S)
    return r, -r


def in_cone(zeta, alphas) -> bool:
    """True when ``zeta`` lies in the good set (``S > 0``)."""
    return _s_value(zeta, alphas) > 0.0


@dataclass(frozen=True)
class LargeScaleMode:
    xi: np.ndarray
    xi_rational: tuple | None
    P: np.ndarray
    alphas: np.ndarray
    zeta: np.ndarray
    gamma_prime: np.ndarray
    lambda_plus: float
    beta: np.ndarray
    rate: complex
    residual: float
    metadata: dict = field(default_factory=dict)

    @property
    def eigenvector(self) -> np.ndarray:
        """``P beta``: the eigenvector of ``A^xi alpha`` in the original frame."""
        return self.P @ self.beta

    def to_dict(self) -> dict:
        out = {
            "xi": [float(x) for x in self.xi],
            "xi_over_2pi": ([f"{f.numerator}/{f.denominator}" for f in self.xi_rational]
                            if self.xi_rational is not None else None),
            "P": self.P.tolist(),
            "alphas": [float(a) for a in self.alphas],
            "zeta": [float(z) for z in self.zeta],
            "gamma_prime": [float(g) for g in self.gamma_prime],
            "lambda_plus": float(self.lambda_plus),
            "beta": {"re": self.beta.real.tolist(), "im": self.beta.imag.tolist()},
            "eigenvector": {"re": self.eigenvector.real.tolist(),
                            "im": self.eigenvector.imag.tolist()},
            "rate": {"re": float(self.rate.real), "im": float(self.rate.imag)},
            "residual": float(self.residual),
        }
        out.update(self.metadata)
        return out


def _as_matrix(alpha) -> np.ndarray:
    a = alpha.alpha if isinstance(alpha, AlphaTensor) else alpha
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValidationError("alpha must be 3x3")
    return a


def _null_vector(M: np.ndarray) -> np.ndarray:
    """Null vector of a rank-2 3x3 matrix from cross products of its rows.

    The row pair with the largest cross product wins; ties go to the first
    pair in the order (1,2), (1,3), (2,3).  Normalized to unit length with the
    first component of maximal modulus real and positive.
    """
    best, best_norm = None, -1.0
    for i, j in ((0, 1), (0, 2), (1, 2)):
        c = np.cross(M[i], M[j])
        n = float(np.linalg.norm(c))
        if n > best_norm * (1 + 1e-12):
            best, best_norm = c, n
    if best_norm == 0.0:
        raise DegenerateAlpha("eigenvector construction failed (rank < 2)")
    v = best / best_norm
    mags = np.abs(v)
    k = int(np.flatnonzero(mags >= mags.max() * (1 - 1e-12))[0])
    return v * (abs(v[k]) / v[k])


def check_alpha(alpha) -> tuple:
    """Decompose and verify distinct nonzero symmetric eigenvalues."""
    a = _as_matrix(alpha)
    sym, anti, gamma = decompose(a)
    P, alphas = diagonalize_sym(sym)
    scale = max(np.abs(alphas).max(), np.finfo(float).tiny)
    tol = 1e3 * np.finfo(float).eps * scale
    if np.abs(alphas).max() == 0.0 or np.abs(alphas).min() <= tol \
            or np.abs(np.diff(alphas)).min() <= tol:
        raise DegenerateAlpha(f"alpha^S eigenvalues {alphas} are not distinct and nonzero")
    return a, sym, anti, gamma, P, alphas


def predict_mode(alpha, xi, xi_rational=None) -> LargeScaleMode:
    a, _, anti, _, P, alphas = check_alpha(alpha)
    xi = np.asarray(xi, dtype=float)
    zeta = P.T @ xi
    if not in_cone(zeta, alphas):
        raise OutsideCone(f"zeta={zeta} is outside the good set for alphas={alphas}")
    lam = lambda_pm(zeta, alphas)[0].real
    gp_anti = P.T @ anti @ P
    gamma_p = np.array([gp_anti[2, 1], gp_anti[0, 2], gp_anti[1, 0]])
    M = a_xi(zeta) @ np.diag(alphas) - lam * np.eye(3)
    beta = _null_vector(M)
    rate = complex(lam, -float(zeta @ gamma_p))
    v = P @ beta
    full = a_xi(xi) @ a
    residual = float(np.linalg.norm(full @ v - rate * v))
    bound = TOL.algebraic * max(1.0, np.linalg.norm(full))
    if residual > bound:
        raise DegenerateAlpha(f"predicted eigenpair residual {residual:.3e} exceeds {bound:.1e}")
    return LargeScaleMode(xi, xi_rational, P, alphas, zeta, gamma_p, lam, beta, rate,
                          residual)


def farey(qmax: int) -> list:
    """Reduced fractions ``p/q`` in ``(0, 1]`` with ``q <= qmax``, ascending."""
    return sorted({Fraction(p, q) for q in range(1, qmax + 1) for p in range(1, q + 1)})


def find_xi(alpha, qmax: int = 8, scale=1) -> LargeScaleMode:
    """Scan ``xi = 2 pi (r_1, r_2, r_3)`` over ``r_i`` in ``farey(qmax)``.

    Picks the direction maximizing ``lambda_+ / |xi|`` inside the good set;
    among maximizers (to relative ``1e-12``) the lexicographically first
    triple wins.  ``scale`` (a rational) multiplies the chosen ``xi`` exactly.
    """
    if qmax < 1:
        raise ValidationError("qmax must be >= 1")
    scale = Fraction(scale)
    if scale <= 0:
        raise ValidationError("scale must be positive")
    _, _, _, _, P, alphas = check_alpha(alpha)
    fr = farey(qmax)
    vals = np.array([float(f) for f in fr])
    grid = np.stack(np.meshgrid(vals, vals, vals, indexing="ij"), axis=-1).reshape(-1, 3)
    zeta = grid @ P  # rows: (P^T xi)^T
    a1, a2, a3 = alphas
    S = zeta[:, 0] ** 2 * a2 * a3 + zeta[:, 1] ** 2 * a3 * a1 + zeta[:, 2] ** 2 * a1 * a2
    ok = S > 0
    if not ok.any():
        raise NoViableXi(f"no scanned direction lies in the good set (qmax={qmax})")
    score = np.where(ok, np.sqrt(np.where(ok, S, 0.0)) / np.linalg.norm(grid, axis=1), -np.inf)
    best = score.max()
    idx = int(np.flatnonzero(score >= best * (1 - 1e-12))[0])
    n = len(fr)
    triple = (fr[idx // (n * n)], fr[(idx // n) % n], fr[idx % n])
    triple = tuple(f * scale for f in triple)
    xi = np.array([TWO_PI * float(f) for f in triple])
    mode = predict_mode(alpha, xi, triple)
    meta = {"selection": "max lambda_+/|xi| over Farey directions, first in lexicographic order",
            "qmax": qmax, "scale": f"{scale.numerator}/{scale.denominator}",
            "score": float(best)}
    return LargeScaleMode(**{**mode.__dict__, "metadata": meta})


def parse_fraction_list(text: str) -> tuple:
    """``'1/8,1/8,1/4'`` -> Fractions (components of ``xi / 2 pi``)."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValidationError("xi needs three components")
    try:
        return tuple(Fraction(p) for p in parts)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"bad rational in {text!r}") from exc


__all__ = ["a_xi", "diagonalize_sym", "lambda_pm", "in_cone", "LargeScaleMode",
           "predict_mode", "find_xi", "farey", "check_alpha", "parse_fraction_list"]
