import numpy as np
import pytest

from alphadynamo import alpha as am
from alphadynamo.bloch import (ShiftedSolver, assemble, convergence_sweep, eigensolve_near,
                               eigenvalues_near, fit_loglog, kernel_basis, kernel_check,
                               predicted_vector)
from alphadynamo.errors import NoUnstableBranch, SingularShift, ValidationError
from alphadynamo.fields import FourierVectorField, TorusSpec, cross_convolve, random_field
from alphadynamo.large_scale import predict_mode
from alphadynamo.perturbation import vfields
from alphadynamo.pipeline import abc_flow
from conftest import small_flow

XI = 2 * np.pi * np.array([0.25, 0.125, 0.5])


def random_cube(K, seed):
    rng = np.random.default_rng(seed)
    n = 2 * K + 1
    return rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))


def test_apply_matches_assembled_matrix():
    U = small_flow(1, K=3, radius=2)
    op = assemble(U, 0.7, XI, 0.3, 3)
    v = random_cube(3, 2)
    assert np.abs(op.apply(v).ravel() - op.sparse_matrix() @ v.ravel()).max() < 1e-11


def test_apply_matches_field_ops_at_eps0():
    U = small_flow(3, K=3, radius=1)
    torus = TorusSpec((1, 1, 1), 3)
    B = random_field(torus, 3, np.random.default_rng(4), divergence_free=False,
                     zero_mean=False)
    op = assemble(U, 0.5, XI, 0.0, 3)
    kappa = torus.wavevectors()
    conv = cross_convolve(U.retruncate(3), B).coeffs
    ref = 1j * np.cross(kappa, conv, axis=0) - np.sum(kappa**2, axis=0) * B.coeffs / 0.5
    assert np.abs(op.apply(B.coeffs) - ref).max() < 1e-11


def test_expansion_in_eps_is_exact():
    U = small_flow(5, K=2, radius=1)
    v = random_cube(2, 6)
    eps = 0.37
    op0 = assemble(U, 0.9, XI, 0.0, 2)
    op = assemble(U, 0.9, XI, eps, 2)
    lhs = op.apply(v)
    rhs = op0.a0(v) + eps * op0.a1(v) + eps**2 * op0.a2(v)
    assert np.abs(lhs - rhs).max() < 1e-11


def test_zero_flow_spectrum_is_diffusion():
    U = FourierVectorField.zeros(TorusSpec((1, 1, 1), 2))
    op = assemble(U, 2.0, XI, 0.1, 2)
    ev = np.sort(np.linalg.eigvals(op.dense()).real)
    q2 = np.sum(op.q**2, axis=0).ravel()
    assert np.allclose(ev, np.sort(np.tile(-q2 / 2.0, 3)), atol=1e-12)


def test_eigensolve_near_matches_dense():
    U = abc_flow(2)
    r_m = am.working_rm(U, 2)
    op = assemble(U, r_m, XI, 0.05, 2)
    ev = np.linalg.eigvals(op.dense())
    target = 0.01 + 0.0j
    ref = ev[np.argmin(np.abs(ev - target))]
    er = eigensolve_near(op, target)
    assert abs(er.eigenvalue - ref) < 1e-9
    assert er.residual < 1e-8
    # exact eigenvectors off the pure-diffusion values satisfy q.v = 0
    assert op.divergence_defect(er.eigenvector) < 1e-6


def test_shifted_solver_inverts():
    U = small_flow(8, K=3, radius=1)
    op = assemble(U, 0.4, XI, 0.1, 3)
    S = ShiftedSolver(op, 0.2 + 0.1j)
    y = random_cube(3, 9).ravel()
    x = S.solve(y)
    assert np.linalg.norm(op.matvec(x) - (0.2 + 0.1j) * x - y) < 1e-10 * np.linalg.norm(y)


def test_singular_shift_detected():
    # with U = 0 the mean block is exactly -eps^2 |xi|^2 / R_m
    U = FourierVectorField.zeros(TorusSpec((1, 1, 1), 2))
    op = assemble(U, 1.0, XI, 0.0, 2)
    with pytest.raises(SingularShift):
        ShiftedSolver(op, 0.0)


def test_block_eigs_match_dense():
    U = abc_flow(2)
    op = assemble(U, am.working_rm(U, 2), XI, 0.1, 2)
    vals, vecs, res = eigenvalues_near(op, 0.05, count=3)
    ev = np.linalg.eigvals(op.dense())
    ref = ev[np.argsort(np.abs(ev - 0.05))[:3]]
    assert np.allclose(np.sort_complex(vals), np.sort_complex(ref), atol=1e-9)
    assert res.max() < 1e-9


def test_kernel_small():
    U = abc_flow(3)
    r_m = am.working_rm(U, 3)
    kc = kernel_check(U, r_m, 3)
    assert kc.near_zero == 3
    assert kc.subspace_error < 1e-6
    assert kc.kernel_residual < 1e-10
    B = kernel_basis(U, r_m, 3)
    assert np.linalg.matrix_rank(B) == 3


def test_zero_flow_has_no_unstable_branch():
    U = FourierVectorField.zeros(TorusSpec((1, 1, 1), 2))
    with pytest.raises(NoUnstableBranch):
        convergence_sweep(U, 1.0, XI, 2, [0.1, 0.05], 1.0 + 0j)


def test_sweep_validation():
    U = abc_flow(2)
    with pytest.raises(ValidationError):
        convergence_sweep(U, 0.1, XI, 2, [0.05, 0.1], 1.0)
    with pytest.raises(ValidationError):
        assemble(U, -1.0, XI, 0.1, 2)


def test_short_sweep_perturbed_abc():
    # the ABC alpha is isotropic; V-fields split its eigenvalues
    K = 3
    U = abc_flow(K) + vfields(0, (0.3, 0.2, 0.1), K)
    r_m = am.working_rm(U, K)
    al = am.alpha_direct(U, r_m, K)
    xi = 2 * np.pi * np.array([1.0, 0.5, 0.25]) / 8
    mode = predict_mode(al, xi)
    v0 = predicted_vector(U, r_m, K, mode.eigenvector)
    sw = convergence_sweep(U, r_m, xi, K, [1 / 32, 1 / 64, 1 / 128], mode.rate, v0=v0)
    assert np.all(np.diff(sw.errors()) < 0)
    assert sw.slope > 0.8
    assert all(r.mu.real > 0 for r in sw.rows)
    assert sw.to_csv().startswith("eps,re_mu")


def test_fit_loglog():
    eps = np.array([0.1, 0.05, 0.025])
    s, c = fit_loglog(eps, 3 * eps**1.5)
    assert s == pytest.approx(1.5) and c == pytest.approx(np.log(3))
