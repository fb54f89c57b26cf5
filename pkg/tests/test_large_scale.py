from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphadynamo.errors import DegenerateAlpha, NoViableXi, OutsideCone, ValidationError
from alphadynamo.large_scale import (a_xi, diagonalize_sym, farey, find_xi, in_cone,
                                     lambda_pm, parse_fraction_list, predict_mode)


def random_alpha(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    d = rng.uniform(-2, 2, 3)
    g = rng.standard_normal(3)
    anti = np.array([[0, -g[2], g[1]], [g[2], 0, -g[0]], [-g[1], g[0], 0]])
    return Q @ np.diag(d) @ Q.T + anti


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jacobi_matches_eigh(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 3))
    s = a + a.T
    P, vals = diagonalize_sym(s)
    assert np.allclose(vals, np.sort(np.linalg.eigvalsh(s))[::-1], atol=1e-13)
    assert np.allclose(P.T @ s @ P, np.diag(vals), atol=1e-12)
    assert np.allclose(P.T @ P, np.eye(3), atol=1e-14)
    assert np.linalg.det(P) == pytest.approx(1.0)


def test_jacobi_rejects_nonsymmetric():
    with pytest.raises(ValidationError):
        diagonalize_sym(np.arange(9.0).reshape(3, 3))


def test_lambda_and_cone():
    alphas = (1.0, 2.0, -3.0)
    z = (1.0, 0.0, 0.0)  # S = a2 a3 < 0
    assert not in_cone(z, alphas)
    assert lambda_pm(z, alphas)[0] == pytest.approx(1j * np.sqrt(6))
    z = (0.0, 0.0, 1.0)  # S = a1 a2 = 2
    assert in_cone(z, alphas)
    assert lambda_pm(z, alphas) == (pytest.approx(np.sqrt(2)), pytest.approx(-np.sqrt(2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_predict_mode_matches_dense(seed):
    rng = np.random.default_rng(seed)
    a = random_alpha(rng)
    for _ in range(50):
        xi = rng.standard_normal(3)
        try:
            m = predict_mode(a, xi)
            break
        except OutsideCone:
            continue
    else:
        return
    ev = np.linalg.eigvals(a_xi(xi) @ a)
    best = ev[np.argmax(ev.real)]
    assert abs(best - m.rate) < 1e-10 * max(1, abs(best))
    assert abs(m.zeta @ m.beta) < 1e-12
    s = m.zeta**2 @ np.array([m.alphas[1] * m.alphas[2], m.alphas[2] * m.alphas[0],
                              m.alphas[0] * m.alphas[1]])
    assert m.lambda_plus == pytest.approx(np.sqrt(s), rel=1e-12)


def test_outside_cone_and_degenerate():
    a = np.diag([1.0, 2.0, 3.0])  # all positive: every direction is good
    with pytest.raises(OutsideCone):
        predict_mode(np.diag([1.0, 2.0, -3.0]), [1.0, 0.0, 0.0])
    predict_mode(a, [1.0, 1.0, 1.0])
    for bad in (np.diag([1.0, 1.0, 2.0]), np.diag([0.0, 1.0, 2.0]), np.zeros((3, 3))):
        with pytest.raises(DegenerateAlpha):
            predict_mode(bad, [1.0, 1.0, 1.0])


def test_farey():
    assert farey(3) == [Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(1)]
    assert len(farey(8)) == 22


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 6])
def test_find_xi_is_best_and_deterministic(seed):
    a = random_alpha(np.random.default_rng(seed))
    try:
        m = find_xi(a, qmax=5)
    except NoViableXi:
        pytest.skip("no good direction in the positive octant for this alpha")
    m2 = find_xi(a, qmax=5)
    assert m.xi_rational == m2.xi_rational
    best = -np.inf
    for p in farey(5):
        for q in farey(5):
            for r in farey(5):
                xi = 2 * np.pi * np.array([float(p), float(q), float(r)])
                try:
                    mm = predict_mode(a, xi)
                except OutsideCone:
                    continue
                best = max(best, mm.lambda_plus / np.linalg.norm(xi))
    assert m.lambda_plus / np.linalg.norm(m.xi) == pytest.approx(best, rel=1e-12)


def test_find_xi_scale_exact():
    a = np.diag([1.0, 2.0, 3.0])
    m = find_xi(a, qmax=4, scale=Fraction(1, 8))
    base = find_xi(a, qmax=4)
    assert all(x == y / 8 for x, y in zip(m.xi_rational, base.xi_rational))
    assert m.rate == pytest.approx(base.rate / 8, rel=1e-12)
    assert m.to_dict()["scale"] == "1/8"


def test_no_viable_xi():
    # S = -2e-2 x^2 - 1e-2 y^2 + 2e-4 z^2 < 0 once x, y >= 1/3
    with pytest.raises(NoViableXi):
        find_xi(np.diag([1e-2, 2e-2, -1.0]), qmax=3)
    assert find_xi(np.diag([1e-2, 2e-2, -1.0]), qmax=13).lambda_plus > 0


def test_parse_fraction_list():
    assert parse_fraction_list("1/8, 1/4,1") == (Fraction(1, 8), Fraction(1, 4), Fraction(1))
    with pytest.raises(ValidationError):
        parse_fraction_list("1/2,1")
    with pytest.raises(ValidationError):
        parse_fraction_list("1/0,1,1")
