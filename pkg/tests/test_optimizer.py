import math

import mpmath
import numpy as np
import pytest
from scipy import optimize, special

from credit_bsde import oracles
from credit_bsde.errors import SolverError
from credit_bsde.market import Interval, MarketParams, merton_strategy, risk_premium0, sigma0_matrix
from credit_bsde.optimizer import (
    PostDefaultProblem,
    PreDefaultProblem,
    lambert_w,
    lambert_w_log,
    post_default_argmin,
    post_default_argmin_lambert,
    post_default_foc,
    solve_post_default,
    solve_pre_default,
)

LAM0 = risk_premium0(MarketParams())
SIG0 = sigma0_matrix(MarketParams())


def golden_argmin(f, lo=-10.0, hi=10.0, tol=1e-12):
    """Independent golden-section search; only valid for unimodal f.

    Run it on an mpmath objective: in double precision the flat minimum
    limits the argmin to about sqrt(eps).
    """
    r = (mpmath.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


# --- Lambert W -------------------------------------------------------------


@pytest.mark.parametrize("x", [0.0, 1e-300, 1e-20, 1e-5, 0.3, 1.0, math.e, 10.0, 1e5, 1e100, 1e300])
def test_lambert_w_matches_scipy(x):
    assert lambert_w(x) == pytest.approx(special.lambertw(x).real, rel=2e-15, abs=1e-300)


@pytest.mark.parametrize("log_x", [800.0, 2000.0, 1e6])
def test_lambert_w_log_beyond_overflow(log_x):
    w = lambert_w_log(log_x)
    assert math.log(w) + w == pytest.approx(log_x, rel=1e-15)


def test_lambert_w_log_vectorized():
    L = np.array([-np.inf, -50.0, 0.0, 3.0])
    np.testing.assert_allclose(lambert_w_log(L), special.lambertw(np.exp(L)).real, rtol=2e-15)


# --- post-default ------------------------------------------------------------


def test_zero_weight_is_merton_amount():
    assert post_default_argmin(0.05, 0.2, 1.0, -math.inf) == pytest.approx(0.25, rel=1e-15)
    assert oracles.merton_amount(0.01, 0.2, 1.0) == pytest.approx(0.25)


def test_fixed_instance_golden_section():
    prob = PostDefaultProblem(0.05, 0.2, 1.0, 0.04)
    with mpmath.workdps(40):
        x_gs = float(golden_argmin(lambda x: 0.5 * (0.05 - 0.2 * x) ** 2 + 0.04 * mpmath.exp(x)))
    val, x = solve_post_default(prob)
    assert x == pytest.approx(x_gs, abs=1e-8)
    assert x < 0.25
    assert abs(prob.foc(x)) < 1e-15
    assert val == pytest.approx(float(prob.objective(x_gs)), rel=1e-14)


def test_constraint_clips():
    prob = PostDefaultProblem(0.05, 0.2, 1.0, 0.04, Interval(0.0, 0.0))
    assert solve_post_default(prob)[1] == 0.0
    prob = PostDefaultProblem(0.05, 0.2, 1.0, 0.0, Interval(-1.0, 0.1))
    assert solve_post_default(prob)[1] == 0.1


def test_random_newton_vs_lambert_vs_bisection():
    rng = np.random.default_rng(3)
    worst_l = worst_b = 0.0
    for _ in range(1000):
        sharpe, vol, p = rng.uniform(-1, 1), rng.uniform(0.05, 0.5), rng.uniform(0.2, 3)
        lw = rng.uniform(-20, 8)
        x = post_default_argmin(sharpe, vol, p, lw)
        worst_l = max(worst_l, abs(x - post_default_argmin_lambert(sharpe, vol, p, lw)))
        worst_b = max(worst_b, abs(x - oracles.post_default_argmin_bisection(sharpe, vol, p, lw)))
    assert worst_l < 1e-8
    assert worst_b < 1e-8


def test_vectorized_argmin_matches_scalar():
    lw = np.linspace(-30, 10, 41)
    xs = post_default_argmin(0.05, 0.2, 2.0, lw)
    for l, x in zip(lw, xs):
        assert x == post_default_argmin(0.05, 0.2, 2.0, float(l))
    assert np.all(np.diff(xs) < 0)


@pytest.mark.parametrize("lw", [-700.0, 300.0, 700.0])
def test_extreme_weights_satisfy_foc(lw):
    x = post_default_argmin(0.05, 0.2, 1.0, lw)
    assert math.isfinite(x)
    e = math.exp(lw + x)
    assert abs(post_default_foc(0.05, 0.2, 1.0, lw, x)) <= 1e-14 * (0.01 + 0.04 * abs(x) + e)


def test_invalid_post_problem():
    with pytest.raises(ValueError):
        PostDefaultProblem(0.05, 0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        PostDefaultProblem(0.05, 0.2, 1.0, -0.1)


# --- pre-default ---------------------------------------------------------------


def test_zero_weights_give_merton():
    _, pi = solve_pre_default(PreDefaultProblem(LAM0, SIG0, 1.0, (0.5, 0.5)))
    np.testing.assert_allclose(pi, merton_strategy(MarketParams()), atol=1e-12)


def test_fixed_instance_vs_grid_search():
    prob = PreDefaultProblem(LAM0, SIG0, 1.0, (-0.5, -0.5), exp_weights=(0.01, 0.01))
    _, pi = solve_pre_default(prob)
    g = oracles.pre_default_grid_search(prob, pi + np.array([0.7, -0.4]))
    assert np.max(np.abs(pi - g)) < 2e-3
    assert np.linalg.norm(prob.gradient(pi)) < 1e-10
    assert pi[0] == pytest.approx(pi[1], abs=1e-12)


def test_fixed_instance_vs_scipy_minimize():
    prob = PreDefaultProblem(LAM0, SIG0, 1.0, (0.3, -0.2), exp_weights=(0.05, 0.002))
    _, pi = solve_pre_default(prob)
    ref = optimize.minimize(prob.objective, np.zeros(2), jac=prob.gradient, method="BFGS",
                            options={"gtol": 1e-12}).x
    np.testing.assert_allclose(pi, ref, atol=1e-6)


def test_random_pre_default_problems():
    rng = np.random.default_rng(11)
    for _ in range(20):
        m = MarketParams(rho=rng.uniform(-0.6, 0.6), sigma0_vol=tuple(rng.uniform(0.05, 0.4, 2)),
                         b0=tuple(rng.uniform(-0.05, 0.05, 2)))
        prob = PreDefaultProblem(risk_premium0(m), sigma0_matrix(m), rng.uniform(0.3, 3),
                                 tuple(rng.uniform(-1, 1, 2)), log_weights=tuple(rng.uniform(-8, 1, 2)))
        _, pi = solve_pre_default(prob)
        g = oracles.pre_default_grid_search(prob, pi + rng.uniform(-1, 1, 2))
        assert np.max(np.abs(pi - g)) < 2e-3


def test_objective_is_convex():
    rng = np.random.default_rng(5)
    prob = PreDefaultProblem(LAM0, SIG0, 1.5, (-0.7, 0.9), exp_weights=(0.3, 0.1))
    for _ in range(200):
        x, y = rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2)
        t = rng.uniform()
        lhs = prob.objective(t * x + (1 - t) * y)
        assert lhs <= t * prob.objective(x) + (1 - t) * prob.objective(y) + 1e-9 * (1 + abs(lhs))
        assert np.all(np.linalg.eigvalsh(prob.hessian(x)) > 0)


def test_gradient_matches_finite_difference():
    prob = PreDefaultProblem(LAM0, SIG0, 1.0, (0.4, -0.3), exp_weights=(0.2, 0.05))
    x = np.array([0.7, 1.3])
    fd = optimize.approx_fprime(x, prob.objective, 1e-7)
    np.testing.assert_allclose(prob.gradient(x), fd, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("w", [1e-4, 1e-2, 1.0])
def test_larger_weight_reduces_position(w):
    base = solve_pre_default(PreDefaultProblem(LAM0, SIG0, 1.0, (0.0, 0.0), exp_weights=(w, 0.0)))[1]
    more = solve_pre_default(PreDefaultProblem(LAM0, SIG0, 1.0, (0.0, 0.0), exp_weights=(2 * w, 0.0)))[1]
    assert more[0] < base[0] < 2.0


def test_box_constraint_kkt():
    box = (Interval(0.0, 1.0), Interval(-np.inf, np.inf))
    prob = PreDefaultProblem(LAM0, SIG0, 1.0, (-0.5, -0.5), exp_weights=(0.01, 0.01), constraint=box)
    _, pi = solve_pre_default(prob)
    assert 0.0 <= pi[0] <= 1.0
    assert prob.kkt_residual(pi) < 1e-10
    tight = PreDefaultProblem(LAM0, SIG0, 1.0, (-0.5, -0.5), exp_weights=(1e-6, 1e-6), constraint=box)
    pt = solve_pre_default(tight)[1]
    assert pt[0] == 1.0
    assert tight.kkt_residual(pt) < 1e-10
    assert tight.gradient(pt)[0] < 0
    g = oracles.pre_default_grid_search(prob, pi)
    assert np.max(np.abs(pi - g)) < 2e-3


def test_overflow_is_reported():
    prob = PreDefaultProblem(LAM0, SIG0, 1.0, (0.0, 0.0), log_weights=(800.0, 0.0))
    with pytest.raises(SolverError):
        solve_pre_default(prob, start=np.array([1.0, 0.0]))


def test_invalid_pre_problem():
    with pytest.raises(ValueError):
        PreDefaultProblem(LAM0, np.zeros((2, 2)), 1.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        PreDefaultProblem(LAM0, SIG0, 1.0, (0.0, 0.0), exp_weights=(-1.0, 0.0))
