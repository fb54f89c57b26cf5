"""Explicit perturbations that give ``alpha2`` three distinct nonzero eigenvalues.

A flow ``U`` is truncated to ``U^j`` (``|k|_inf <= j``) and the three fields
``V^1, V^2, V^3`` (single wavenumber ``j+i`` along two axes, zero along
axis ``i``) are added with weights ``delta_i``.  Because the spectra are
disjoint the second order coefficient shifts by an explicit diagonal matrix::

    alpha2(U~) = alpha2(U^j) - sum_i delta_i^2/(j+i) (I - e_i e_i^T)

``alpha2`` is quadratic in the flow, hence the squared weights.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .alpha import alpha2
from .errors import CertificateFailed, GapUnreachable, ValidationError
from .fields import FourierVectorField, TorusSpec, norm_hs, norm_l2

# (component, axis, 'sin'|'cos') triples; argument is 2 pi (j+i) theta_axis
_V_TERMS = {
    1: [(0, 2, "sin"), (0, 1, "cos"), (1, 2, "cos"), (2, 1, "sin")],
    2: [(0, 2, "sin"), (1, 0, "sin"), (1, 2, "cos"), (2, 0, "cos")],
    3: [(0, 1, "cos"), (1, 0, "sin"), (2, 1, "sin"), (2, 0, "cos")],
}


def v_terms(i: int):
    return list(_V_TERMS[i])


def build_v(j: int, i: int, K: int | None = None) -> FourierVectorField:
    """The field ``V^i`` at level ``j`` on the unit torus, exact coefficients."""
    if i not in (1, 2, 3):
        raise ValidationError("i must be 1, 2 or 3")
    if j < 0:
        raise ValidationError("j must be >= 0")
    m = j + i
    K = K or m
    if K < m:
        raise ValidationError(f"truncation K={K} cannot hold wavenumber {m}")
    torus = TorusSpec((1, 1, 1), K)
    modes = {}
    for comp, axis, kind in _V_TERMS[i]:
        kp = [0, 0, 0]
        kp[axis] = m
        km = [0, 0, 0]
        km[axis] = -m
        vp = np.zeros(3, dtype=complex)
        vm = np.zeros(3, dtype=complex)
        if kind == "cos":
            vp[comp] = vm[comp] = 0.5
        else:
            vp[comp], vm[comp] = -0.5j, 0.5j
        for k, v in ((tuple(kp), vp), (tuple(km), vm)):
            modes[k] = modes.get(k, 0) + v
    return FourierVectorField.from_modes(torus, modes)


def vfields(j: int, deltas=(1.0, 1.0, 1.0), K: int | None = None) -> FourierVectorField:
    """``sum_i delta_i V^i`` at level ``j``."""
    K = K or j + 3
    out = FourierVectorField.zeros(TorusSpec((1, 1, 1), K))
    for i, d in zip((1, 2, 3), deltas):
        out = out + float(d) * build_v(j, i, K)
    return out


def truncate_flow(U: FourierVectorField, j: int) -> FourierVectorField:
    """Sharp truncation to ``|k|_inf <= j`` (same storage size as ``U``)."""
    if j < 0:
        raise ValidationError("j must be >= 0")
    k = U.torus.integer_grid()
    keep = np.abs(k).max(axis=0) <= j
    return U.with_coeffs(U.coeffs * keep[None])


def shift_matrix(j: int, deltas) -> np.ndarray:
    """``sum_i delta_i^2/(j+i) (I - e_i e_i^T)`` (the diagonal subtracted by the V-fields)."""
    d = np.zeros(3)
    for i, delta in enumerate(deltas):
        w = float(delta) ** 2 / (j + i + 1)
        d += w
        d[i] -= w
    return np.diag(d)


@dataclass(frozen=True)
class PerturbationPlan:
    j: int
    deltas: tuple
    base: FourierVectorField
    truncated: FourierVectorField
    perturbed: FourierVectorField
    alpha2_base: np.ndarray
    alpha2_perturbed: np.ndarray
    gap: float | None = None
    extra: dict = field(default_factory=dict)

    def perturbation_norms(self, s: float = 2.0) -> dict:
        pert = self.perturbed - self.truncated
        return {"l2": norm_l2(pert), "hs": norm_hs(pert, s), "s": s}

    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.linalg.eigvalsh(0.5 * (self.alpha2_perturbed + self.alpha2_perturbed.T)))

    def to_dict(self) -> dict:
        return {"j": self.j, "deltas": list(self.deltas), "gap": self.gap,
                "alpha2_base": self.alpha2_base.tolist(),
                "alpha2": self.alpha2_perturbed.tolist(),
                "eigenvalues": self.eigenvalues().tolist(),
                "perturbation_norms": self.perturbation_norms(), **self.extra}


def perturb(U: FourierVectorField, j: int, deltas, tol: float = 1e-12) -> PerturbationPlan:
    """Assemble ``U~ = U^j + sum delta_i V^i`` and certify the ``alpha2`` shift."""
    deltas = tuple(float(d) for d in deltas)
    if len(deltas) != 3 or any(d < 0 for d in deltas):
        raise ValidationError("deltas must be three non-negative numbers")
    K = max(U.K, j + 3)
    Uk = U.retruncate(K) if U.K != K else U
    Uj = truncate_flow(Uk, j)
    Ut = Uj + vfields(j, deltas, K)
    a_base = alpha2(Uj)
    a_new = alpha2(Ut)
    expected = a_base - shift_matrix(j, deltas)
    err = float(np.abs(a_new - expected).max())
    scale = max(1.0, float(np.abs(expected).max()))
    if err > tol * scale:
        raise CertificateFailed(f"alpha2 shift identity violated by {err:.3e}")
    return PerturbationPlan(j, deltas, Uk, Uj, Ut, a_base, a_new,
                            extra={"certificate_error": err})


def gaps_ok(eigs: np.ndarray, gap: float) -> bool:
    e = np.sort(eigs)
    return bool(np.all(np.diff(e) >= gap / 2) and np.all(np.abs(e) >= gap / 2))


def choose_deltas(U: FourierVectorField, j: int, gap: float,
                  max_doublings: int = 40) -> PerturbationPlan:
    """Smallest doubling-grid weights giving well separated nonzero eigenvalues.

    Candidates ``delta_i = gap * 2^{n_i}`` are visited in order of increasing
    ``n_1 + n_2 + n_3`` and then lexicographically; the first triple whose
    symmetric ``alpha2`` has pairwise gaps and magnitudes ``>= gap/2`` wins.
    """
    if not gap > 0:
        raise ValidationError("gap must be positive")
    K = max(U.K, j + 3)
    Uj = truncate_flow(U.retruncate(K) if U.K != K else U, j)
    base = alpha2(Uj)
    base_sym = 0.5 * (base + base.T)
    order = sorted(itertools.product(range(max_doublings + 1), repeat=3),
                   key=lambda n: (sum(n), n))
    for n in order:
        deltas = tuple(gap * 2.0 ** e for e in n)
        eigs = np.linalg.eigvalsh(base_sym - shift_matrix(j, deltas))
        if gaps_ok(eigs, gap):
            plan = perturb(U, j, deltas)
            return PerturbationPlan(plan.j, plan.deltas, plan.base, plan.truncated,
                                    plan.perturbed, plan.alpha2_base,
                                    plan.alpha2_perturbed, gap,
                                    {**plan.extra, "exponents": list(n)})
    raise GapUnreachable(f"no delta triple within {max_doublings} doublings reaches gap {gap}")
