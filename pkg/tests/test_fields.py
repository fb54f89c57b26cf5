import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphadynamo.errors import NonzeroMean, TorusMismatch, ValidationError
from alphadynamo.fields import (FourierVectorField, TorusSpec, cross_convolve, curl,
                                divergence, dumps_field, gradient, inv_laplacian,
                                laplacian, leray_project, loads_field, mean, norm_hs,
                                norm_l2, random_field)

seeds = st.integers(0, 2**32 - 1)
periods = st.sampled_from([(1, 1, 1), (2, 1, 1), (1, 3, 2), (0.5, 1, 1.5)])


def rand(torus, radius, seed, **kw):
    return random_field(torus, radius, np.random.default_rng(seed), **kw)


def test_torus_validation():
    with pytest.raises(ValidationError):
        TorusSpec((1, 1), 2)
    with pytest.raises(ValidationError):
        TorusSpec((1, -1, 1), 2)
    with pytest.raises(ValidationError):
        TorusSpec((1, 1, 1), 0)
    t = TorusSpec((1, 2, 3), 2)
    assert t.size == 5 and t.volume == 6.0
    with pytest.raises(ValidationError):
        t.index((3, 0, 0))


def test_single_mode_values():
    torus = TorusSpec((1, 1, 1), 2)
    # cos(2 pi theta_2) e_1
    B = FourierVectorField.from_modes(torus, {(0, 1, 0): [0.5, 0, 0], (0, -1, 0): [0.5, 0, 0]})
    pts = np.array([[0.1, 0.2, 0.3], [0.7, 0.0, 0.9]])
    vals = B.evaluate(pts)
    assert np.allclose(vals[:, 0], np.cos(2 * np.pi * pts[:, 1]), atol=1e-14)
    assert np.allclose(vals[:, 1:], 0)
    # curl of (cos 2 pi y, 0, 0) is (0, 0, 2 pi sin 2 pi y)
    C = curl(B).evaluate(pts)
    assert np.allclose(C[:, 2], 2 * np.pi * np.sin(2 * np.pi * pts[:, 1]), atol=1e-12)
    assert B.is_real() and B.divergence_defect() == 0


def test_grid_matches_direct_sum():
    torus = TorusSpec((1, 2, 1), 3)
    B = rand(torus, 2, 5)
    N = 8
    g = B.to_grid(N)
    axes = [np.arange(N) * p / N for p in torus.periods]
    X = np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T
    direct = B.evaluate(X).real.T.reshape(3, N, N, N)
    assert np.abs(g - direct).max() < 1e-12


def test_from_grid_inverts_to_grid():
    torus = TorusSpec((1, 1, 1), 3)
    B = rand(torus, 3, 1)
    assert np.abs(FourierVectorField.from_grid(torus, B.to_grid(9)).coeffs - B.coeffs).max() \
        < 1e-13


def test_torus_mismatch():
    a = FourierVectorField.zeros(TorusSpec((1, 1, 1), 2))
    b = FourierVectorField.zeros(TorusSpec((1, 1, 1), 3))
    c = FourierVectorField.zeros(TorusSpec((2, 1, 1), 2))
    with pytest.raises(TorusMismatch):
        a + b
    with pytest.raises(TorusMismatch):
        cross_convolve(a, c)


def test_immutable():
    B = FourierVectorField.zeros(TorusSpec((1, 1, 1), 1))
    with pytest.raises(ValueError):
        B.coeffs[0, 0, 0, 0] = 1
    with pytest.raises(AttributeError):
        B.torus = None


def test_inv_laplacian_requires_zero_mean():
    torus = TorusSpec((1, 1, 1), 2)
    with pytest.raises(NonzeroMean):
        inv_laplacian(FourierVectorField.constant(torus, [1, 0, 0]))


def test_gradient_is_curl_free_and_projected_away():
    torus = TorusSpec((1, 1, 2), 3)
    rng = np.random.default_rng(3)
    phi = rng.standard_normal((7, 7, 7)) + 1j * rng.standard_normal((7, 7, 7))
    G = gradient(phi, torus)
    assert np.abs(curl(G).coeffs).max() < 1e-12
    assert np.abs(leray_project(G).coeffs).max() < 1e-12


def test_mean_rejects_imaginary():
    torus = TorusSpec((1, 1, 1), 1)
    with pytest.raises(ValidationError):
        mean(FourierVectorField.constant(torus, [1j, 0, 0]))
    assert np.allclose(mean(FourierVectorField.constant(torus, [1, 2, 3])), [1, 2, 3])


def test_norms():
    torus = TorusSpec((2, 1, 1), 2)
    B = FourierVectorField.from_modes(torus, {(1, 0, 0): [0, 0.5, 0], (-1, 0, 0): [0, 0.5, 0]})
    # ||cos(pi x) e_2||^2 over volume 2 is 1
    assert norm_l2(B) == pytest.approx(1.0, rel=1e-14)
    assert norm_hs(B, 1.0) == pytest.approx(np.sqrt(1 + np.pi**2), rel=1e-14)


def test_serialization_roundtrip_exact():
    torus = TorusSpec((1, 1.5, 1), 3)
    B = rand(torus, 2, 11)
    C = loads_field(dumps_field(B))
    assert C.torus == B.torus
    assert np.array_equal(C.coeffs, B.coeffs)


# --------------------------------------------------------------------------
# randomized invariants

@settings(max_examples=30, deadline=None)
@given(seeds, periods)
def test_curl_and_projection_divergence_free(seed, per):
    torus = TorusSpec(per, 3)
    B = rand(torus, 3, seed, divergence_free=False)
    assert np.abs(divergence(curl(B))).max() < 1e-10
    P = leray_project(B)
    assert P.divergence_defect() < 1e-10 * max(1, np.abs(B.coeffs).max())
    assert np.abs(leray_project(P).coeffs - P.coeffs).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds, periods)
def test_laplacian_inverse(seed, per):
    torus = TorusSpec(per, 3)
    B = rand(torus, 3, seed)
    assert np.abs(laplacian(inv_laplacian(B)).coeffs - B.coeffs).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds, periods)
def test_parseval(seed, per):
    torus = TorusSpec(per, 3)
    B = rand(torus, 3, seed)
    N = 10
    g = B.to_grid(N)
    integral = np.mean(np.sum(g**2, axis=0)) * torus.volume
    assert np.sqrt(integral) == pytest.approx(norm_l2(B), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, periods)
def test_convolution_matches_collocation(seed, per):
    torus = TorusSpec(per, 4)
    U = rand(torus, 2, seed)
    B = rand(torus, 2, seed + 1, divergence_free=False, zero_mean=False)
    C = cross_convolve(U, B)
    N = 16
    prod = np.cross(U.to_grid(N), B.to_grid(N), axis=0)
    ref = FourierVectorField.from_grid(torus, prod)
    assert np.abs(C.coeffs - ref.coeffs).max() < 1e-12
    assert C.is_real()
