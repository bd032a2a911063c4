import math

import numpy as np
import pytest

from credit_bsde import copula as cop
from credit_bsde.copula import GumbelParams
from credit_bsde.errors import DomainError, OrderingError
from credit_bsde.market import MarketParams, post_default_single_params
from credit_bsde.optimizer import post_default_foc
from credit_bsde.recursion import (
    TimeGrid,
    build_diagonal,
    solve_cascade,
    solve_y0,
    solve_y1,
    strategy_path,
    terminal_y0,
    value_function,
    y2,
)

MKT = MarketParams(gamma=(-0.5, -0.5))
SYM = GumbelParams(0.1, 0.1, 2.0)
ASYM = GumbelParams(0.01, 0.1, 2.0)
SMALL = GumbelParams(0.01, 0.01, 2.0)


@pytest.fixture(scope="module")
def sym_cascade():
    return solve_cascade(MKT, SYM, 100)


def test_time_grid():
    g = TimeGrid(0.2, 1.0, 4)
    assert g.h == pytest.approx(0.2)
    np.testing.assert_allclose(g.nodes, [0.2, 0.4, 0.6, 0.8, 1.0])
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 1)


# --- level 2 -------------------------------------------------------------------


def test_y2_independence():
    c = GumbelParams(1.0, 1.0, 1.0)
    assert y2(c, 1.0, 1.0, 1, 2, 1.0) == pytest.approx(-2.0, abs=1e-15)
    assert y2(c, 1.0, 1.0, 1, 2, 2.0) == pytest.approx(-1.0, abs=1e-15)


def test_y2_matches_density():
    v = y2(ASYM, 0.4, 0.9, 1, 2, 1.0)
    assert v == pytest.approx(math.log(cop.density_ordered(ASYM, 0.4, 0.9, 1, 2)), abs=1e-14)
    assert y2(ASYM, 0.4, 0.9, 1, 2, 3.0) == pytest.approx(v / 3.0, rel=1e-15)


@pytest.mark.parametrize("args,err", [((0.5, 0.4, 1, 2), OrderingError), ((0.0, 0.4, 1, 2), OrderingError),
                                      ((0.2, 0.4, 1, 1), DomainError)])
def test_y2_errors(args, err):
    with pytest.raises(err):
        y2(ASYM, *args[:2], args[2], args[3], 1.0)


# --- level 1 -------------------------------------------------------------------


@pytest.mark.parametrize("name", [1, 2])
@pytest.mark.parametrize("theta1", [0.1, 0.6, 0.95])
def test_y1_terminal_identity(name, theta1):
    sol = solve_y1(MKT, ASYM, theta1, name, TimeGrid(theta1, 1.0, 20))
    assert math.exp(sol.y[-1]) == pytest.approx(cop.alpha1(ASYM, 1.0, theta1, name), rel=1e-12)
    assert sol.foc_residual_max < 1e-8
    assert np.all(np.isfinite(sol.y))


@pytest.mark.parametrize("name", [1, 2])
def test_y1_terminal_independence(name):
    c = GumbelParams(0.3, 0.7, 1.0)
    a = (0.3, 0.7)
    p = 1.5
    th = 0.4
    sol = solve_y1(MKT.replace(p=p), c, th, name, TimeGrid(th, 1.0, 10))
    ai, aj = a[name - 1], a[2 - name]
    assert sol.y[-1] == pytest.approx((math.log(ai) - ai * th - aj * 1.0) / p, abs=1e-14)


def test_y1_zero_generator():
    m = MKT.replace(b1=(0.0, 0.0))
    sol = solve_y1(m, ASYM, 0.3, 1, TimeGrid(0.3, 1.0, 10), log_density=lambda th, t: np.full(np.shape(t), -np.inf))
    np.testing.assert_array_equal(sol.y, np.full(11, sol.y[-1]))
    np.testing.assert_array_equal(sol.pi, np.zeros(11))


def test_y1_zero_weight_closed_form():
    # without the jump term the generator is the constant -lam^2/(2p)
    m = MKT.replace(p=2.0)
    lam = post_default_single_params(m, 2).sharpe
    th = 0.3
    sol = solve_y1(m, ASYM, th, 1, TimeGrid(th, 1.0, 10), log_density=lambda th, t: np.full(np.shape(t), -np.inf))
    exact = sol.y[-1] - (1.0 - sol.times) * lam**2 / (2 * m.p)
    np.testing.assert_allclose(sol.y, exact, atol=1e-14)
    np.testing.assert_allclose(sol.pi, lam / (m.p * 0.2), rtol=1e-14)


@pytest.mark.parametrize("copula", [SYM, ASYM, GumbelParams(0.3, 0.05, 1.0)])
def test_y1_step_halving(copula):
    a = solve_y1(MKT, copula, 0.2, 1, TimeGrid(0.2, 1.0, 50))
    b = solve_y1(MKT, copula, 0.2, 1, TimeGrid(0.2, 1.0, 100))
    assert abs(a.y[0] - b.y[0]) < 1e-6
    np.testing.assert_allclose(a.y, b.y[::2], atol=1e-6)


def test_y1_foc_at_nodes():
    sol = solve_y1(MKT, ASYM, 0.5, 2, TimeGrid(0.5, 1.0, 20))
    c = post_default_single_params(MKT, 1)
    for t, y, pi in zip(sol.times, sol.y, sol.pi):
        lw = cop.log_density_ordered(ASYM, 0.5, t, 2) - y
        assert abs(post_default_foc(c.sharpe, c.vol, 1.0, lw, pi)) < 1e-8


def test_y1_domain_errors():
    with pytest.raises(DomainError):
        solve_y1(MKT, ASYM, 0.0, 1, TimeGrid(0.0, 1.0, 10))
    with pytest.raises(DomainError):
        solve_y1(MKT, ASYM, 0.3, 1, TimeGrid(0.2, 1.0, 10))
    with pytest.raises(DomainError):
        solve_y1(MKT, ASYM, 0.3, 3, TimeGrid(0.3, 1.0, 10))


# --- diagonal ------------------------------------------------------------------


def test_diagonal_terminal(sym_cascade):
    d = sym_cascade.diag
    for name in (1, 2):
        assert d.d(name)[-1] == pytest.approx(cop.log_alpha1(SYM, 1.0, 1.0, name), abs=1e-14)
    # beta > 1: a default at 0+ has zero weight
    assert d.d1[0] == -np.inf
    assert np.all(np.isfinite(d.d1[1:]))


def test_diagonal_is_row_of_level1_solves():
    grid = TimeGrid(0.0, 1.0, 10)
    diag = build_diagonal(MKT, ASYM, grid)
    for k in (1, 4, 8):
        tk = grid.nodes[k]
        for name in (1, 2):
            sol = solve_y1(MKT, ASYM, tk, name, TimeGrid(tk, 1.0, 10 - k))
            assert diag.d(name)[k] == pytest.approx(sol.y[0], abs=1e-13)


def test_diagonal_self_convergence():
    a = build_diagonal(MKT, SYM, TimeGrid(0.0, 1.0, 100))
    b = build_diagonal(MKT, SYM, TimeGrid(0.0, 1.0, 200))
    for name in (1, 2):
        err = np.abs(a.d(name)[1:] - b.d(name)[2::2])
        # the density varies on the scale theta1 itself, so the first node
        # after the singular corner converges more slowly
        assert err[0] < 5e-6
        assert np.max(err[4:]) < 1e-6


def test_diagonal_self_convergence_smooth():
    c = GumbelParams(0.3, 0.05, 1.0)
    a = build_diagonal(MKT, c, TimeGrid(0.0, 1.0, 50))
    b = build_diagonal(MKT, c, TimeGrid(0.0, 1.0, 100))
    for name in (1, 2):
        assert np.max(np.abs(a.d(name) - b.d(name)[::2])) < 1e-6


def test_diagonal_independence_zero_weight_b1():
    # beta = 1 with b1 = 0: the weight term is the only thing moving D; compare with a fine grid
    c = GumbelParams(0.3, 0.6, 1.0)
    m = MKT.replace(b1=(0.0, 0.0))
    coarse = build_diagonal(m, c, TimeGrid(0.0, 1.0, 20))
    fine = build_diagonal(m, c, TimeGrid(0.0, 1.0, 320))
    for name in (1, 2):
        np.testing.assert_allclose(coarse.d(name), fine.d(name)[::16], atol=1e-8)
    # at T the closed form (1/p)(ln a_i - a_i T - a_j T) holds exactly
    assert coarse.d1[-1] == pytest.approx(math.log(0.3) - 0.9, abs=1e-14)


def test_diagonal_log_weights_interpolate(sym_cascade):
    d = sym_cascade.diag
    nodes = d.grid.nodes
    assert d.log_weights(nodes[7]) == (d.d1[7], d.d2[7])
    mid = 0.5 * (nodes[7] + nodes[8])
    lo, hi = sorted((d.d1[7], d.d1[8]))
    assert lo - 1e-6 <= d.log_weights(mid)[0] <= hi + 1e-6


# --- level 0 -------------------------------------------------------------------


def test_y0_terminal(sym_cascade):
    assert terminal_y0(MKT, SYM) == pytest.approx(-math.sqrt(0.02), rel=1e-15)
    assert sym_cascade.y0.y[-1] == pytest.approx(-0.141421, abs=1e-6)
    assert math.exp(sym_cascade.y0.y[-1]) == pytest.approx(cop.alpha0(SYM, 1.0), abs=1e-12)


def test_y0_foc_and_symmetry(sym_cascade):
    assert sym_cascade.y0.foc_residual_max < 1e-8
    assert sym_cascade.diag.foc_residual_max < 1e-8
    fin = np.isfinite(sym_cascade.diag.d1)
    np.testing.assert_allclose(sym_cascade.diag.d1[fin], sym_cascade.diag.d2[fin], atol=1e-10, rtol=0)
    np.testing.assert_allclose(sym_cascade.y0.pi[:, 0], sym_cascade.y0.pi[:, 1], atol=1e-10, rtol=0)


def test_y0_grid_mismatch(sym_cascade):
    with pytest.raises(DomainError):
        solve_y0(MKT, SYM, TimeGrid(0.0, 1.0, 50), sym_cascade.diag)


def test_y0_convergence():
    c = GumbelParams(0.3, 0.05, 1.0)
    a = solve_cascade(MKT, c, 50)
    b = solve_cascade(MKT, c, 100)
    np.testing.assert_allclose(a.y0.y, b.y0.y[::2], atol=1e-6, rtol=0)


@pytest.mark.parametrize("gamma", [(1.0, 1.0), (0.5, 0.5)])
def test_symmetric_gamma_positive_is_merton(gamma):
    cas = solve_cascade(MKT.replace(gamma=gamma), SYM, 100)
    np.testing.assert_allclose(cas.pi0, [2.0, 2.0], atol=1e-3)


@pytest.mark.parametrize("copula", [SYM, GumbelParams(0.01, 0.01, 1.0)])
def test_gamma_monotonicity(copula):
    pis = [solve_cascade(MKT.replace(gamma=(g, g)), copula, 40).pi0 for g in (-0.5, -0.1, 0.0, 0.5, 1.0)]
    assert np.all(np.diff(np.array(pis), axis=0) >= -1e-12)


# --- value function and strategy paths ---------------------------------------


def test_value_function(sym_cascade):
    sol = sym_cascade.y0
    for t in (0.0, 0.37, 1.0):
        y = float(np.interp(t, sol.times, sol.y))
        assert value_function(sol, t, y) == pytest.approx(-1.0, abs=1e-15)
    assert value_function(sol, 1.0, 0.0) == pytest.approx(-cop.alpha0(SYM, 1.0), abs=1e-12)
    assert value_function(sol, 0.5, 1.0) > value_function(sol, 0.5, 0.0)
    with pytest.raises(DomainError):
        value_function(sol, 1.5, 0.0)


def test_value_function_gamma_ordering():
    vals = {g: solve_cascade(MKT.replace(gamma=(g, g)), SMALL, 50).y0 for g in (0.0, 0.5, 1.0)}
    t = vals[0.0].times
    v = {g: np.array([value_function(s, x, 0.0) for x in t]) for g, s in vals.items()}
    assert np.all(v[0.5] >= v[0.0] - 1e-14)
    assert np.all(v[1.0] >= v[0.5] - 1e-14)


def test_strategy_path_no_default(sym_cascade):
    path = strategy_path(MKT, SYM, sym_cascade.grid, None, y0=sym_cascade.y0)
    np.testing.assert_array_equal(path.pre_pi, sym_cascade.y0.pi)
    assert path.jump is None and path.survivor is None


def test_strategy_path_post_segment_ignores_gamma():
    grid = TimeGrid(0.0, 1.0, 50)
    paths = [strategy_path(MKT.replace(gamma=(g, g)), SMALL, grid, (1, 0.6)) for g in (-0.5, -0.1)]
    np.testing.assert_array_equal(paths[0].post_pi, paths[1].post_pi)
    assert paths[0].survivor == 2
    assert paths[0].post_times[0] == 0.6
    assert paths[0].pre_times[-1] == 0.6
    assert abs(paths[0].jump) > 1e-3


def test_strategy_path_limit_at_horizon(sym_cascade):
    d = sym_cascade.diag
    tau = 1.0 - 1e-7
    path = strategy_path(MKT, SYM, sym_cascade.grid, (2, tau), y0=sym_cascade.y0, post_steps=2)
    assert path.post_pi[0] == pytest.approx(d.pi_tri[1][-1, -1], abs=1e-5)
    with pytest.raises(DomainError):
        strategy_path(MKT, SYM, sym_cascade.grid, (2, 1.0), y0=sym_cascade.y0)
