import math
import warnings
from fractions import Fraction

import numpy as np
import pytest

from alphadynamo.errors import (CflViolation, HorizonExceeded, NanDetected, NonIntegerPeriod,
                                ValidationError)
from alphadynamo.evolution import (MhdSolver, MhdState, SpectralBox, estimate_rho,
                                   fit_timescale, linearized_rhs, log_slope, make_big_torus,
                                   nonlinear_rhs, reindex, run_instability, sector_list,
                                   sector_mode, step)
from alphadynamo.fields import FourierVectorField, TorusSpec, norm_l2, random_field
from alphadynamo.pipeline import abc_flow

PER = (2, 2, 2)
K = 2


@pytest.fixture(scope="module")
def flow():
    return abc_flow(1)


@pytest.fixture(scope="module")
def big(flow):
    box = SpectralBox(PER, K)
    return reindex(flow, PER, box.torus.K)


def dealiased(box, seed, amplitude=1.0):
    B = random_field(box.torus, box.torus.K, np.random.default_rng(seed), amplitude=amplitude)
    return box.to_field(box.from_field(B))


def test_make_big_torus():
    t = make_big_torus((Fraction(1), Fraction(1, 2), Fraction(1)), Fraction(1, 4))
    assert t.periods == (4.0, 8.0, 4.0)
    t = make_big_torus(2 * np.pi * np.array([1.0, 1.0, 0.5]), 0.25)
    assert t.periods == (4.0, 4.0, 8.0)
    with pytest.raises(NonIntegerPeriod):
        make_big_torus((Fraction(1), Fraction(1), Fraction(3)), Fraction(1, 4))
    with pytest.raises(NonIntegerPeriod):
        make_big_torus((Fraction(0), Fraction(1), Fraction(1)), Fraction(1, 4))


def test_reindex(flow):
    B = reindex(flow, (2, 3, 1), 4)
    assert B.torus.periods == (2.0, 3.0, 1.0)
    # the same physical field, now seen as periodic on the larger box
    pts = np.array([[0.3, 1.1, 0.7], [1.9, 2.5, 0.1]])
    assert np.allclose(B.evaluate(pts), flow.evaluate(pts), atol=1e-13)
    with pytest.raises(ValidationError):
        reindex(flow, (5, 5, 5), 4)


def test_sector_list_counts():
    assert len(sector_list((4, 4, 4))) == 36
    assert len(sector_list((2, 2, 2))) == 8
    assert len(sector_list((3, 1, 1))) == 2
    assert sector_list((1, 1, 1)) == [(0, 0, 0)]


def test_box_roundtrip_and_norm():
    box = SpectralBox((2, 1, 3), 2)
    B = dealiased(box, 1)
    a = box.from_field(B)
    assert np.array_equal(box.to_field(a).coeffs, B.coeffs)
    assert math.sqrt(box.norm2(a)) == pytest.approx(norm_l2(B), rel=1e-13)
    g = box.to_grid(a)
    assert np.mean(np.sum(g**2, axis=0)) * box.volume == pytest.approx(box.norm2(a), rel=1e-12)
    with pytest.raises(NonIntegerPeriod):
        SpectralBox((1.5, 1, 1), 2)


@pytest.mark.parametrize("seed", range(5))
def test_quadratic_terms_conserve_energy(big, seed):
    S = MhdSolver(big, K, 0.3, 0.7)
    box = S.box
    u = box.from_field(dealiased(box, seed))
    b = box.from_field(dealiased(box, seed + 100))
    du, db = S.nonlinear_terms(u, b, linear=False, quadratic=True)
    rate = np.sum(box.weight * (np.conj(u) * du + np.conj(b) * db)).real
    scale = np.sum(box.weight * (np.abs(u * du) + np.abs(b * db)))
    assert abs(rate) < 1e-12 * scale


def test_diffusion_only_decay_is_exact():
    box = SpectralBox(PER, K)
    zero = FourierVectorField.zeros(box.torus)
    S = MhdSolver(zero, K, 0.5, 2.0)
    b = box.from_field(dealiased(box, 3))
    u = box.from_field(dealiased(box, 4))
    dt = 0.01
    un, bn = S.step(u, b, dt, linear=True, quadratic=False)
    assert np.abs(bn - np.exp(-box.k2 * dt / 2.0) * b).max() < 1e-15
    assert np.abs(un - np.exp(-box.k2 * dt / 0.5) * u).max() < 1e-15
    assert S.norm(un, bn) < S.norm(u, b)


def test_time_step_is_fourth_order(big):
    # mild diffusion: Lawson schemes lose order when k^2 dt / R is large
    S = MhdSolver(big, K, 50.0, 50.0)
    box = S.box
    u0 = box.from_field(dealiased(box, 7, 0.2))
    b0 = box.from_field(dealiased(box, 8, 0.2))

    def run(n):
        u, b = u0, b0
        for _ in range(n):
            u, b = S.step(u, b, 0.2 / n)
        return u, b

    ref = run(64)
    e1 = S.norm(*(x - y for x, y in zip(run(8), ref)))
    e2 = S.norm(*(x - y for x, y in zip(run(16), ref)))
    assert 12 < e1 / e2 < 20


def test_state_api(flow, big):
    box = SpectralBox(PER, K)
    mu, b, _ = sector_mode(flow, 5.0, PER, K, (1, 0, 0))
    st = MhdState(FourierVectorField.zeros(box.torus), b, 0.0, 0.4, 5.0)
    du, db = linearized_rhs(st, big, K)
    inner = sum(np.vdot(x, y) for x, y in zip(b.coeffs, db.coeffs)) * box.volume
    assert inner.real == pytest.approx(mu.real, rel=1e-9)
    assert norm_l2(du) < 1e-12
    qu, qb = nonlinear_rhs(st, big, K)
    assert norm_l2(qb) < 1e-14  # u = 0 gives no induction
    st2 = step(st, big, K, 1e-3)
    assert st2.t == pytest.approx(1e-3)
    assert st2.b.divergence_defect() < 1e-12


def test_sector_mode_is_eigenvector(flow, big):
    mu, b, op = sector_mode(flow, 5.0, PER, K, (1, 1, 0))
    assert norm_l2(b) == pytest.approx(1.0)
    assert b.is_real()
    S = MhdSolver(big, K, 1.0, 5.0)
    box = S.box
    bb = box.from_field(b)
    lin = S.nonlinear_terms(np.zeros_like(bb), bb, quadratic=False)[1] \
        + S.diffusion(np.zeros_like(bb), bb)[1]
    # b is an equal-weight sum of orthogonal eigenvectors with eigenvalues mu, conj(mu)
    assert box.volume * np.sum(box.weight * np.conj(bb) * lin).real == \
        pytest.approx(mu.real, abs=1e-10)
    assert math.sqrt(box.norm2(lin)) == pytest.approx(abs(mu), rel=1e-10)


def test_estimate_rho_small(flow):
    est = estimate_rho(flow, PER, K, 5.0, 0.4)
    assert est.block in ("magnetic", "hydrodynamic")
    rates = [r for _, r, _ in est.sector_rates]
    assert len(rates) == 8
    if est.block == "magnetic":
        assert est.rho == pytest.approx(max(rates))
    d = est.to_dict()
    assert d["sector"] is None or len(d["sector"]) == 3


def test_run_instability_trivial_escape(flow, big):
    _, b, _ = sector_mode(flow, 5.0, PER, K, (1, 0, 0))
    run = run_instability(big, None, b, 0.5, 0.5, 1.0, K, 0.4, 5.0)
    assert run.t_delta == 0.0 and len(run.t) == 1


def test_run_instability_linear_escape_time(flow, big):
    r_m = 20.0
    est = estimate_rho(flow, PER, K, r_m, 0.4, include_hydro=False)
    mu, b, _ = sector_mode(flow, r_m, PER, K, est.sector)
    assert mu.real == pytest.approx(est.rho) and mu.real > 0
    delta, c0 = 1e-4, 1e-1
    run = run_instability(big, None, b, delta, c0, 10 * math.log(c0 / delta) / mu.real, K, 0.4,
                          r_m, linear_only=True)
    expect = math.log(c0 / delta) / mu.real
    assert run.t_delta == pytest.approx(expect, rel=0.02)
    assert log_slope(run.t, run.l2, run.t[-1] / 2) == pytest.approx(mu.real, rel=0.01)


def test_run_instability_validation_and_warnings(flow, big):
    _, b, _ = sector_mode(flow, 5.0, PER, K, (1, 0, 0))
    with pytest.raises(ValidationError):
        run_instability(big, None, b * 2.0, 1e-3, 1.0, 1.0, K, 0.4, 5.0)
    with pytest.raises(ValidationError):
        run_instability(big, None, b, 0.0, 1.0, 1.0, K, 0.4, 5.0)
    with pytest.warns(HorizonExceeded):
        run_instability(big, None, b, 1e-8, 1.0, 0.05, K, 0.4, 5.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonExceeded)
        with pytest.warns(CflViolation):
            run_instability(big, None, b, 1e-8, 1.0, 0.5, K, 0.4, 5.0, dt=0.25)


def test_nan_detection(big):
    S = MhdSolver(big, K, 0.4, 5.0)
    u = np.full((3,) + S.box.k2.shape, np.nan, dtype=complex)
    with pytest.raises(NanDetected):
        S.step(u, np.zeros_like(u), 1e-3)


def test_unresolved_flow_rejected():
    U = random_field(TorusSpec(PER, 4), 4, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        MhdSolver(U, 1, 1.0, 1.0)


def test_fit_timescale_and_slope():
    d = np.array([1e-3, 1e-4, 1e-5])
    t = 2.0 * -np.log(d) + 1.0
    f = fit_timescale(d, t)
    assert f.slope == pytest.approx(2.0) and f.intercept == pytest.approx(1.0)
    assert f.r2 == pytest.approx(1.0)
    ts = np.linspace(0, 2, 21)
    assert log_slope(ts, np.exp(0.7 * ts)) == pytest.approx(0.7)
    with pytest.raises(ValidationError):
        fit_timescale([1e-3], [1.0])
