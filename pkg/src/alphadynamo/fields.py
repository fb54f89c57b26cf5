"""Truncated Fourier representation of periodic vector fields.

A field on the torus ``R/T1 x R/T2 x R/T3`` is stored by its coefficients in
the basis ``exp(2*pi*i k.theta/T)`` for integer ``k`` with ``|k|_inf <= K``.
The coefficient array has shape ``(3, 2K+1, 2K+1, 2K+1)`` and the entry for
``k`` lives at index ``k + K``.  Derivatives act as multiplication by the
angular wavevector ``kappa = 2*pi*k/T``.

Products are evaluated exactly (no aliasing) by zero-padded FFTs, then
truncated sharply back to ``|k|_inf <= K``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from .config import TOL
from .errors import NonzeroMean, TorusMismatch, ValidationError


@dataclass(frozen=True)
class TorusSpec:
    """Periods of a rectangular torus together with the truncation ``K``."""

    periods: tuple = (1.0, 1.0, 1.0)
    K: int = 4

    def __post_init__(self):
        periods = tuple(float(Fraction(p)) if isinstance(p, (Fraction, str)) else float(p)
                        for p in self.periods)
        if len(periods) != 3 or any(not p > 0 for p in periods):
            raise ValidationError(f"periods must be three positive numbers, got {self.periods}")
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError(f"truncation K must be an integer >= 1, got {self.K}")
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "K", int(self.K))

    @property
    def size(self) -> int:
        return 2 * self.K + 1

    @property
    def volume(self) -> float:
        return float(np.prod(self.periods))

    def with_K(self, K: int) -> "TorusSpec":
        return TorusSpec(self.periods, K)

    def same_geometry(self, other: "TorusSpec") -> bool:
        return np.allclose(self.periods, other.periods, rtol=0, atol=1e-14)

    def integer_grid(self) -> np.ndarray:
        """Integer wavevectors, shape ``(3, n, n, n)``."""
        r = np.arange(-self.K, self.K + 1)
        return np.array(np.meshgrid(r, r, r, indexing="ij"))

    def wavevectors(self) -> np.ndarray:
        """Angular wavevectors ``2*pi*k/T``, shape ``(3, n, n, n)``."""
        k = self.integer_grid().astype(float)
        scale = 2 * np.pi / np.asarray(self.periods)
        return k * scale[:, None, None, None]

    def index(self, k) -> tuple:
        k = tuple(int(c) for c in k)
        if max(abs(c) for c in k) > self.K:
            raise ValidationError(f"wavevector {k} outside truncation K={self.K}")
        return tuple(c + self.K for c in k)


# ---------------------------------------------------------------------------
# raw-array helpers (coefficient cubes without the dataclass wrapper)

def support_radius(coeffs: np.ndarray, tol: float = 0.0) -> int:
    """Largest ``|k|_inf`` carrying a coefficient with modulus above ``tol``."""
    K = (coeffs.shape[-1] - 1) // 2
    mag = np.abs(coeffs).reshape(-1, *coeffs.shape[-3:]).max(axis=0)
    nz = np.argwhere(mag > tol)
    if nz.size == 0:
        return 0
    return int(np.abs(nz - K).max())


def pad_cube(coeffs: np.ndarray, K_new: int) -> np.ndarray:
    """Re-truncate a coefficient cube to ``K_new`` (zero padding or cropping)."""
    K = (coeffs.shape[-1] - 1) // 2
    lead = coeffs.shape[:-3]
    n_new = 2 * K_new + 1
    out = np.zeros(lead + (n_new,) * 3, dtype=complex)
    m = min(K, K_new)
    src = slice(K - m, K + m + 1)
    dst = slice(K_new - m, K_new + m + 1)
    out[..., dst, dst, dst] = coeffs[..., src, src, src]
    return out


def _fft_size(n: int) -> int:
    return sfft.next_fast_len(n)


def cube_to_grid(coeffs: np.ndarray, N: int) -> np.ndarray:
    """Values on the uniform ``N^3`` grid (complex), leading axes preserved."""
    K = (coeffs.shape[-1] - 1) // 2
    if N < 2 * K + 1:
        raise ValidationError("grid too coarse for the truncation")
    idx = np.arange(-K, K + 1) % N
    full = np.zeros(coeffs.shape[:-3] + (N, N, N), dtype=complex)
    full[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]] = coeffs
    return sfft.ifftn(full, axes=(-3, -2, -1), norm="forward")


def grid_to_cube(values: np.ndarray, K: int) -> np.ndarray:
    N = values.shape[-1]
    hat = sfft.fftn(values, axes=(-3, -2, -1), norm="forward")
    idx = np.arange(-K, K + 1) % N
    return hat[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product along axis 0."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def cross_cube(u: np.ndarray, v: np.ndarray, K_out: int) -> np.ndarray:
    """Exact truncated coefficients of ``u ^ v`` for coefficient cubes.

    The padding is chosen from the actual support of the inputs so that no
    mode with ``|k|_inf <= K_out`` receives aliased contributions.
    """
    ru = support_radius(u)
    rv = support_radius(v)
    u = pad_cube(u, ru)
    v = pad_cube(v, rv)
    N = _fft_size(max(ru + rv + K_out + 1, 2 * max(ru, rv) + 1, 2 * K_out + 1))
    prod = cross(cube_to_grid(u, N), cube_to_grid(v, N))
    out = grid_to_cube(prod, min(K_out, (N - 1) // 2))
    return pad_cube(out, K_out) if out.shape[-1] != 2 * K_out + 1 else out


def skew(w) -> np.ndarray:
    """Matrix of ``x -> w ^ x``."""
    w = np.asarray(w)
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])


def cross_matrix(u: np.ndarray, K: int, shift=None) -> sp.csr_matrix:
    """Sparse matrix of ``v -> P_K(u ^ v)`` on flattened ``(3, n, n, n)`` cubes.

    Independent of the FFT path; used as an assembly route and as an oracle.
    """
    Ku = (u.shape[-1] - 1) // 2
    n = 2 * K + 1
    n3 = n ** 3
    rows, cols, vals = [], [], []
    kk = np.arange(-K, K + 1)
    g = np.array(np.meshgrid(kk, kk, kk, indexing="ij")).reshape(3, -1)
    flat_out = np.arange(n3)
    for p in np.argwhere(np.abs(u).max(axis=0) > 0):
        pk = p - Ku
        src = g - pk[:, None]
        ok = np.all(np.abs(src) <= K, axis=0)
        src_flat = np.ravel_multi_index(tuple(src[:, ok] + K), (n, n, n))
        out_flat = flat_out[ok]
        block = skew(u[:, p[0], p[1], p[2]])
        for c in range(3):
            for d in range(3):
                if block[c, d] != 0:
                    rows.append(c * n3 + out_flat)
                    cols.append(d * n3 + src_flat)
                    vals.append(np.full(out_flat.size, block[c, d], dtype=complex))
    if not rows:
        return sp.csr_matrix((3 * n3, 3 * n3), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(3 * n3, 3 * n3))


def curl_matrix(kappa: np.ndarray) -> sp.csr_matrix:
    """Block-diagonal sparse matrix of ``v -> i kappa ^ v`` (kappa shape (3, ...))."""
    kf = kappa.reshape(3, -1)
    m = kf.shape[1]
    blocks = {(0, 1): -kf[2], (0, 2): kf[1], (1, 0): kf[2],
              (1, 2): -kf[0], (2, 0): -kf[1], (2, 1): kf[0]}
    rows, cols, vals = [], [], []
    ar = np.arange(m)
    for (c, d), w in blocks.items():
        rows.append(c * m + ar)
        cols.append(d * m + ar)
        vals.append(1j * w)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(3 * m, 3 * m))


# ---------------------------------------------------------------------------

class FourierVectorField:
    """Immutable truncated Fourier coefficients of a 3-vector field."""

    __slots__ = ("torus", "coeffs")

    def __init__(self, torus: TorusSpec, coeffs):
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.shape != (3,) + (torus.size,) * 3:
            raise ValidationError(
                f"coefficient shape {coeffs.shape} does not match K={torus.K}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "torus", torus)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("FourierVectorField is immutable")

    # construction ---------------------------------------------------------
    @classmethod
    def zeros(cls, torus: TorusSpec) -> "FourierVectorField":
        return cls(torus, np.zeros((3,) + (torus.size,) * 3, dtype=complex))

    @classmethod
    def constant(cls, torus: TorusSpec, vector) -> "FourierVectorField":
        c = np.zeros((3,) + (torus.size,) * 3, dtype=complex)
        c[:, torus.K, torus.K, torus.K] = vector
        return cls(torus, c)

    @classmethod
    def from_modes(cls, torus: TorusSpec, modes: Mapping) -> "FourierVectorField":
        """Build from ``{k: vector}``; entries at ``-k`` must be given explicitly."""
        c = np.zeros((3,) + (torus.size,) * 3, dtype=complex)
        for k, vec in modes.items():
            c[(slice(None),) + torus.index(k)] += np.asarray(vec, dtype=complex)
        return cls(torus, c)

    @classmethod
    def from_grid(cls, torus: TorusSpec, values: np.ndarray) -> "FourierVectorField":
        """Discrete transform of grid samples ``values`` (shape ``(3, N, N, N)``)."""
        return cls(torus, grid_to_cube(np.asarray(values, dtype=complex), torus.K))

    # access ---------------------------------------------------------------
    @property
    def K(self) -> int:
        return self.torus.K

    def __getitem__(self, k) -> np.ndarray:
        return self.coeffs[(slice(None),) + self.torus.index(k)]

    def with_coeffs(self, coeffs) -> "FourierVectorField":
        return FourierVectorField(self.torus, coeffs)

    def retruncate(self, K: int) -> "FourierVectorField":
        return FourierVectorField(self.torus.with_K(K), pad_cube(self.coeffs, K))

    def flip(self) -> np.ndarray:
        """Coefficients reindexed as ``k -> -k``."""
        return self.coeffs[:, ::-1, ::-1, ::-1]

    def support(self, tol: float = 0.0) -> list:
        """Sorted list of integer wavevectors with nonzero coefficient."""
        mag = np.abs(self.coeffs).max(axis=0)
        return sorted(tuple(int(c) for c in idx - self.K) for idx in np.argwhere(mag > tol))

    def support_radius(self) -> int:
        return support_radius(self.coeffs)

    # diagnostics ----------------------------------------------------------
    def reality_defect(self) -> float:
        return float(np.abs(self.flip() - np.conj(self.coeffs)).max())

    def divergence_defect(self) -> float:
        return float(np.abs(divergence_cube(self.coeffs, self.torus)).max())

    def is_real(self, tol: float = TOL.reality) -> bool:
        return self.reality_defect() <= tol

    def symmetrized(self) -> "FourierVectorField":
        """Closest conjugate-symmetric field (average of ``u(k)`` and ``conj u(-k)``)."""
        return self.with_coeffs(0.5 * (self.coeffs + np.conj(self.flip())))

    # evaluation -----------------------------------------------------------
    def to_grid(self, N: int | None = None) -> np.ndarray:
        """Real values on the uniform grid ``theta_j = j T / N`` (imaginary part dropped)."""
        N = N or 2 * self.K + 2
        return cube_to_grid(self.coeffs, N).real

    def evaluate(self, points) -> np.ndarray:
        """Direct trigonometric sum at arbitrary points, shape ``(m, 3)`` in, ``(m, 3)`` out.

        Complex output; used as a slow independent oracle.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        kappa = self.torus.wavevectors().reshape(3, -1)
        c = self.coeffs.reshape(3, -1)
        keep = np.abs(c).max(axis=0) > 0
        phase = np.exp(1j * pts @ kappa[:, keep])
        return phase @ c[:, keep].T

    # arithmetic -----------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, FourierVectorField):
            return NotImplemented
        if self.torus != other.torus:
            raise TorusMismatch("fields live on different tori or truncations")

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __repr__(self):
        return (f"FourierVectorField(periods={self.torus.periods}, K={self.K}, "
                f"modes={len(self.support())})")


# ---------------------------------------------------------------------------
# differential operators

def divergence_cube(coeffs: np.ndarray, torus: TorusSpec) -> np.ndarray:
    return 1j * np.einsum("i...,i...->...", torus.wavevectors(), coeffs)


def _require_same(U: FourierVectorField, B: FourierVectorField):
    if U.torus != B.torus:
        raise TorusMismatch(
            f"torus mismatch: {U.torus} vs {B.torus}")


def cross_convolve(U: FourierVectorField, B: FourierVectorField) -> FourierVectorField:
    """Truncated coefficients of the pointwise product ``U ^ B``."""
    _require_same(U, B)
    return B.with_coeffs(cross_cube(U.coeffs, B.coeffs, B.K))


def curl(B: FourierVectorField) -> FourierVectorField:
    kappa = B.torus.wavevectors()
    return B.with_coeffs(1j * cross(kappa, B.coeffs))


def divergence(B: FourierVectorField) -> np.ndarray:
    """Scalar coefficient cube of ``div B``."""
    return divergence_cube(B.coeffs, B.torus)


def gradient(phi: np.ndarray, torus: TorusSpec) -> FourierVectorField:
    """Gradient of a scalar coefficient cube."""
    return FourierVectorField(torus, 1j * torus.wavevectors() * phi[None])


def laplacian(B: FourierVectorField) -> FourierVectorField:
    k2 = np.sum(B.torus.wavevectors() ** 2, axis=0)
    return B.with_coeffs(-k2 * B.coeffs)


def inv_laplacian(B: FourierVectorField, tol: float = TOL.algebraic) -> FourierVectorField:
    """Inverse Laplacian on zero-mean fields; the output has zero mean."""
    K = B.K
    if np.abs(B.coeffs[:, K, K, K]).max() > tol:
        raise NonzeroMean("inv_laplacian requires a zero-mean field")
    k2 = np.sum(B.torus.wavevectors() ** 2, axis=0)
    k2[K, K, K] = 1.0
    out = -B.coeffs / k2
    out[:, K, K, K] = 0
    return B.with_coeffs(out)


def mean(B: FourierVectorField, tol: float = TOL.algebraic) -> np.ndarray:
    """Spatial mean (real 3-vector); asserts the imaginary part is negligible."""
    K = B.K
    m = B.coeffs[:, K, K, K]
    if np.abs(m.imag).max() > tol * max(1.0, np.abs(m).max()):
        raise ValidationError(f"mean has imaginary part {np.abs(m.imag).max():.3e}")
    return m.real.copy()


def leray_project(B: FourierVectorField) -> FourierVectorField:
    kappa = B.torus.wavevectors()
    k2 = np.sum(kappa ** 2, axis=0)
    K = B.K
    k2[K, K, K] = 1.0
    kdotb = np.einsum("i...,i...->...", kappa, B.coeffs)
    return B.with_coeffs(B.coeffs - kappa * (kdotb / k2)[None])


def norm_hs(B: FourierVectorField, s: float) -> float:
    """Sobolev norm with weight ``(1 + |kappa|^2)^s``, volume included."""
    k2 = np.sum(B.torus.wavevectors() ** 2, axis=0)
    w = (1.0 + k2) ** s
    return float(np.sqrt(B.torus.volume * np.sum(w * np.sum(np.abs(B.coeffs) ** 2, axis=0))))


def norm_l2(B: FourierVectorField) -> float:
    return float(np.sqrt(B.torus.volume * np.sum(np.abs(B.coeffs) ** 2)))


# ---------------------------------------------------------------------------
# serialization

def _num(x: float) -> float:
    return float(f"{x:.17g}")


def field_to_dict(B: FourierVectorField) -> dict:
    entries = []
    for k in B.support():
        v = B[k]
        entries.append({"k": list(k), "re": [_num(x) for x in v.real],
                        "im": [_num(x) for x in v.imag]})
    return {"torus": [_num(p) for p in B.torus.periods], "K": B.K, "entries": entries}


def field_from_dict(d: Mapping) -> FourierVectorField:
    torus = TorusSpec(tuple(d["torus"]), int(d["K"]))
    modes = {}
    for e in d["entries"]:
        modes[tuple(e["k"])] = np.asarray(e["re"], float) + 1j * np.asarray(e["im"], float)
    return FourierVectorField.from_modes(torus, modes)


def dumps_field(B: FourierVectorField) -> str:
    return json.dumps(field_to_dict(B), indent=1)


def loads_field(text: str) -> FourierVectorField:
    return field_from_dict(json.loads(text))


def random_field(torus: TorusSpec, radius: int, rng: np.random.Generator,
                 divergence_free: bool = True, zero_mean: bool = True,
                 amplitude: float = 1.0) -> FourierVectorField:
    """Random real band-limited field supported on ``|k|_inf <= radius``."""
    c = np.zeros((3,) + (torus.size,) * 3, dtype=complex)
    r = radius
    K = torus.K
    block = rng.standard_normal((3, 2 * r + 1, 2 * r + 1, 2 * r + 1)) \
        + 1j * rng.standard_normal((3, 2 * r + 1, 2 * r + 1, 2 * r + 1))
    c[:, K - r:K + r + 1, K - r:K + r + 1, K - r:K + r + 1] = block
    B = FourierVectorField(torus, c).symmetrized()
    if zero_mean:
        cc = B.coeffs.copy()
        cc[:, K, K, K] = 0
        B = B.with_coeffs(cc)
    if divergence_free:
        B = leray_project(B)
    n = norm_l2(B)
    return B * (amplitude / n) if n > 0 else B


def sum_fields(fields: Iterable[FourierVectorField]) -> FourierVectorField:
    fields = list(fields)
    out = fields[0]
    for f in fields[1:]:
        out = out + f
    return out
