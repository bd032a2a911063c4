"""Backward cascade of the default-indexed value equations.

With deterministic coefficients every level is an ODE integrated backward
from the horizon:

* level 2 (both names gone) is closed form, ``Y2 = ln(alpha)/p``;
* level 1 is a family of ODEs indexed by the first default time ``theta1``
  and the defaulted name; its generator carries the jump weight
  ``C = alpha(theta1, t, i, j) exp(-p y)``;
* level 0 needs the level-1 solution on the diagonal ``theta1 = t``.

All integrations are classical RK4 on uniform grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from credit_bsde import copula as cop
from credit_bsde.copula import Alpha1Formula, GumbelParams
from credit_bsde.errors import DomainError, OrderingError, SolverError
from credit_bsde.market import (
    MarketParams,
    merton_strategy,
    post_default_single_params,
    risk_premium0,
    sigma0_matrix,
)
from credit_bsde.optimizer import (
    PreDefaultProblem,
    post_default_argmin,
    post_default_foc,
    post_default_value,
    solve_pre_default,
)

DEFAULT_STEPS = 200


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"grid needs t_start < t_end, got [{self.t_start}, {self.t_end}]")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError(f"grid needs at least 2 steps, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.steps + 1)


@dataclass(frozen=True)
class ScenarioSolution:
    """Y and the optimal amounts on a grid for one default scenario.

    ``pi`` has shape (n+1, 2) before any default and (n+1,) after one.
    """

    scenario: str
    grid: TimeGrid
    y: np.ndarray
    pi: np.ndarray
    foc_residual_max: float
    p: float
    theta1: Optional[float] = None
    defaulted: Optional[int] = None

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes


@dataclass(frozen=True)
class DiagonalTable:
    """D_i(t) = Y^{1,i}_t(theta1 = t) on the level-0 grid.

    ``d1[0]``/``d2[0]`` are ``-inf`` when beta > 1: the post-default value of
    a default at time 0+ has zero weight in the limit.  The full level-1
    triangles are kept (rows: theta1 node, columns: time node; NaN where
    t < theta1).
    """

    grid: TimeGrid
    d1: np.ndarray
    d2: np.ndarray
    p: float
    mode: Alpha1Formula
    y_tri: tuple = field(default=(), repr=False)
    pi_tri: tuple = field(default=(), repr=False)
    foc_residual_max: float = 0.0
    _splines: dict = field(default_factory=dict, repr=False, compare=False)

    def d(self, name: int) -> np.ndarray:
        return self.d1 if name == 1 else self.d2

    def log_weights(self, t: float) -> tuple[float, float]:
        """p D_1(t), p D_2(t); exact at nodes, cubic in exp(p D) between them."""
        nodes = self.grid.nodes
        k = int(round((t - self.grid.t_start) / self.grid.h))
        if 0 <= k <= self.grid.steps and abs(nodes[k] - t) <= 1e-12 * max(1.0, abs(t)):
            return (self.p * float(self.d1[k]), self.p * float(self.d2[k]))
        out = []
        for name in (1, 2):
            spline, shift = self._spline(name)
            e = float(spline(t))
            out.append(math.log(e) + shift if e > 0 else -math.inf)
        return tuple(out)

    def _spline(self, name):
        if name not in self._splines:
            pd = self.p * self.d(name)
            shift = float(np.max(pd[np.isfinite(pd)]))
            self._splines[name] = (CubicSpline(self.grid.nodes, np.exp(pd - shift)), shift)
        return self._splines[name]


# ---------------------------------------------------------------------------
# level 2
# ---------------------------------------------------------------------------


def y2(copula: GumbelParams, theta1: float, theta2: float, i: int, j: int, p: float) -> float:
    """Closed-form level-2 value (1/p) ln alpha(theta, i, j); ``-inf`` if the density vanishes."""
    if {i, j} != {1, 2}:
        raise DomainError(f"names must be a permutation of (1, 2), got ({i}, {j})")
    if not 0 < theta1 <= theta2:
        raise OrderingError(f"need 0 < theta1 <= theta2, got ({theta1}, {theta2})")
    return float(cop.log_density_ordered(copula, theta1, theta2, i)) / p


# ---------------------------------------------------------------------------
# level 1
# ---------------------------------------------------------------------------


class _PostDefaultGenerator:
    """Vectorized f^{1,i}(t, y, theta1) and its minimizer."""

    def __init__(self, market: MarketParams, copula: GumbelParams, defaulted: int,
                 log_density: Optional[Callable] = None):
        if defaulted not in (1, 2):
            raise DomainError(f"defaulted name must be 1 or 2, got {defaulted}")
        self.p = market.p
        self.defaulted = defaulted
        coef = post_default_single_params(market, 3 - defaulted)
        self.sharpe, self.vol = coef.sharpe, coef.vol
        self.constraint = market.constraint_post
        self.copula = copula
        if log_density is None:
            self.log_density = lambda th, t: cop.log_density_ordered(copula, th, t, defaulted)
        else:
            self.log_density = log_density

    def log_weight(self, t, y, theta1):
        return self.log_density(theta1, t) - self.p * y

    def __call__(self, t, y, theta1):
        lw = self.log_weight(t, y, theta1)
        pi = post_default_argmin(self.sharpe, self.vol, self.p, lw)
        if self.constraint is not None:
            pi = self.constraint.clip(pi)
        f = -self.sharpe**2 / (2.0 * self.p) + post_default_value(self.sharpe, self.vol, self.p, lw, pi)
        return f, pi

    def residual(self, t, y, theta1, pi):
        if self.constraint is not None:
            return np.zeros_like(np.asarray(pi, float))
        return np.abs(post_default_foc(self.sharpe, self.vol, self.p, self.log_weight(t, y, theta1), pi))


def _terminal_y1(market, copula, theta1, defaulted, mode):
    return cop.log_alpha1(copula, market.T, theta1, defaulted, mode) / market.p


def _rk4_backward(gen, nodes, y_end, theta1):
    """Integrate dY/dt = -f backward over per-row node arrays (rows x cols).

    Returns Y, pi at every node and the max FOC residual.  The strategy at a
    node comes from the first-stage inner solve of the step leaving it.
    """
    n_rows, n_nodes = nodes.shape
    Y = np.empty((n_rows, n_nodes))
    PI = np.empty((n_rows, n_nodes))
    y = np.array(y_end, dtype=float)
    Y[:, -1] = y
    res = 0.0
    for m in range(n_nodes - 2, -1, -1):
        t = nodes[:, m + 1]
        h = t - nodes[:, m]
        k1, pi = gen(t, y, theta1)
        PI[:, m + 1] = pi
        res = max(res, float(np.max(gen.residual(t, y, theta1, pi))))
        k2, _ = gen(t - 0.5 * h, y + 0.5 * h * k1, theta1)
        k3, _ = gen(t - 0.5 * h, y + 0.5 * h * k2, theta1)
        k4, _ = gen(nodes[:, m], y + h * k3, theta1)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Y[:, m] = y
    t0 = nodes[:, 0]
    _, pi = gen(t0, y, theta1)
    PI[:, 0] = pi
    res = max(res, float(np.max(gen.residual(t0, y, theta1, pi))))
    if not np.all(np.isfinite(Y)):
        raise SolverError("post-default ODE produced non-finite values")
    return Y, PI, res


def solve_y1_batch(market: MarketParams, copula: GumbelParams, theta1, defaulted: int,
                   steps: int, mode="derived", log_density=None):
    """Level-1 solutions for many first-default times at once.

    Row r lives on the uniform grid of [theta1[r], T] with ``steps`` steps.
    Returns (nodes, Y, PI, residual).
    """
    mode = Alpha1Formula.parse(mode)
    theta1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    T = market.T
    if np.any(theta1 <= 0) or np.any(theta1 >= T):
        raise DomainError("first default times must lie in (0, T)")
    frac = np.arange(steps + 1) / steps
    nodes = theta1[:, None] + (T - theta1)[:, None] * frac[None, :]
    nodes[:, -1] = T
    nodes[:, 0] = theta1
    gen = _PostDefaultGenerator(market, copula, defaulted, log_density)
    Y, PI, res = _rk4_backward(gen, nodes, _terminal_y1(market, copula, theta1, defaulted, mode), theta1)
    return nodes, Y, PI, res


def solve_y1(market: MarketParams, copula: GumbelParams, theta1: float, defaulted: int,
             grid: TimeGrid, mode="derived", log_density=None) -> ScenarioSolution:
    """Post-default solution after ``defaulted`` failed at ``theta1``.

    ``grid`` must span [theta1, T].
    """
    if not 0 < theta1 < market.T:
        raise DomainError(f"theta1 must lie in (0, T), got {theta1}")
    if abs(grid.t_start - theta1) > 1e-12 or abs(grid.t_end - market.T) > 1e-12:
        raise DomainError("grid must span [theta1, T]")
    nodes, Y, PI, res = solve_y1_batch(market, copula, [theta1], defaulted, grid.steps, mode, log_density)
    return ScenarioSolution("one-default", grid, Y[0], PI[0], res, market.p, theta1, defaulted)


def build_diagonal(market: MarketParams, copula: GumbelParams, grid: TimeGrid,
                   mode="derived") -> DiagonalTable:
    """D_i at every node of ``grid`` (which must be [0, T]).

    Node k is the value at t_k of the level-1 ODE started from theta1 = t_k,
    integrated on the grid tail [t_k, T].  All rows are advanced together,
    so one sweep over the grid fills the whole triangle.
    """
    mode = Alpha1Formula.parse(mode)
    if grid.t_start != 0.0 or abs(grid.t_end - market.T) > 1e-12:
        raise DomainError("diagonal grid must span [0, T]")
    nodes = grid.nodes
    N = grid.steps
    p = market.p
    # theta1 = 0 is singular when beta > 1; its weight is zero in the limit
    first = 0 if copula.beta == 1.0 else 1
    diag = []
    tris_y, tris_pi = [], []
    res = 0.0
    for name in (1, 2):
        gen = _PostDefaultGenerator(market, copula, name)
        theta = nodes[first:]
        y = _terminal_y1(market, copula, theta, name, mode)
        Ytri = np.full((N + 1, N + 1), np.nan)
        PItri = np.full((N + 1, N + 1), np.nan)
        Ytri[first:, N] = y
        for m in range(N - 1, first - 1, -1):
            rows = slice(first, m + 1)
            th = nodes[rows]
            yy = y[: m + 1 - first]
            t = nodes[m + 1]
            h = t - nodes[m]
            k1, pi = gen(t, yy, th)
            PItri[rows, m + 1] = pi
            res = max(res, float(np.max(gen.residual(t, yy, th, pi))))
            k2, _ = gen(t - 0.5 * h, yy + 0.5 * h * k1, th)
            k3, _ = gen(t - 0.5 * h, yy + 0.5 * h * k2, th)
            k4, _ = gen(nodes[m], yy + h * k3, th)
            yy = yy + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            y = yy
            Ytri[rows, m] = yy
        # strategy at each row's own first node
        th = nodes[first:]
        yk = Ytri[first:, :][np.arange(N + 1 - first), np.arange(first, N + 1)]
        _, pi = gen(th, yk, th)
        PItri[np.arange(first, N + 1), np.arange(first, N + 1)] = pi
        res = max(res, float(np.max(gen.residual(th, yk, th, pi))))
        d = np.full(N + 1, -np.inf)
        d[first:] = yk
        if not np.all(np.isfinite(d[first:])):
            raise SolverError(f"diagonal for name {name} is not finite")
        diag.append(d)
        tris_y.append(Ytri)
        tris_pi.append(PItri)
    return DiagonalTable(grid, diag[0], diag[1], p, mode, tuple(tris_y), tuple(tris_pi), res)


# ---------------------------------------------------------------------------
# level 0
# ---------------------------------------------------------------------------


class _PreDefaultGenerator:
    def __init__(self, market: MarketParams, diag: DiagonalTable):
        self.market = market
        self.diag = diag
        self.p = market.p
        self.lam = risk_premium0(market)
        self.sig = sigma0_matrix(market)
        self.base = -float(self.lam @ self.lam) / (2.0 * self.p)

    def problem(self, t, y):
        pd1, pd2 = self.diag.log_weights(t)
        return PreDefaultProblem(
            lambda0=self.lam, sigma0=self.sig, p=self.p, gamma=self.market.gamma,
            constraint=self.market.constraint_pre,
            log_weights=(pd1 - self.p * y, pd2 - self.p * y),
        )

    def __call__(self, t, y):
        prob = self.problem(t, y)
        val, pi = solve_pre_default(prob)
        return self.base + val, pi, prob


def terminal_y0(market: MarketParams, copula: GumbelParams) -> float:
    """(1/p) ln alpha0_T = -(T/p) (a1^beta + a2^beta)^(1/beta)."""
    return -market.T * copula.joint_rate / market.p


def solve_y0(market: MarketParams, copula: GumbelParams, grid: TimeGrid,
             diag: DiagonalTable) -> ScenarioSolution:
    """Pre-default value and strategy on ``grid`` (same grid as ``diag``)."""
    if diag.grid != grid:
        raise DomainError("diagonal table was built on a different grid")
    nodes = grid.nodes
    N = grid.steps
    gen = _PreDefaultGenerator(market, diag)
    Y = np.empty(N + 1)
    PI = np.empty((N + 1, 2))
    y = terminal_y0(market, copula)
    Y[N] = y
    res = 0.0
    for m in range(N - 1, -1, -1):
        t = nodes[m + 1]
        h = t - nodes[m]
        k1, pi, prob = gen(t, y)
        PI[m + 1] = pi
        res = max(res, _pre_residual(prob, pi))
        k2 = gen(t - 0.5 * h, y + 0.5 * h * k1)[0]
        k3 = gen(t - 0.5 * h, y + 0.5 * h * k2)[0]
        k4 = gen(nodes[m], y + h * k3)[0]
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Y[m] = y
    _, pi, prob = gen(nodes[0], y)
    PI[0] = pi
    res = max(res, _pre_residual(prob, pi))
    if not np.all(np.isfinite(Y)):
        raise SolverError("pre-default ODE produced non-finite values")
    return ScenarioSolution("pre-default", grid, Y, PI, res, market.p)


def _pre_residual(prob: PreDefaultProblem, pi) -> float:
    if prob.constraint is not None:
        return prob.kkt_residual(pi)
    return float(np.linalg.norm(prob.gradient(pi)))


def value_function(sol: ScenarioSolution, t: float, x: float) -> float:
    """-exp(-p (x - Y_t)), with Y linearly interpolated between nodes."""
    nodes = sol.times
    if not nodes[0] - 1e-12 <= t <= nodes[-1] + 1e-12:
        raise DomainError(f"t={t} outside [{nodes[0]}, {nodes[-1]}]")
    y = float(np.interp(t, nodes, sol.y))
    return -math.exp(-sol.p * (x - y))


# ---------------------------------------------------------------------------
# convenience: whole cascade, strategy records
# ---------------------------------------------------------------------------


_DIAG_CACHE: dict = {}


def _diag_key(market: MarketParams, copula: GumbelParams, steps: int, mode: Alpha1Formula):
    return (copula, market.b1, market.sigma1_vol, market.p, market.T,
            market.constraint_post, steps, mode)


def cached_diagonal(market, copula, grid: TimeGrid, mode="derived") -> DiagonalTable:
    """:func:`build_diagonal` memoized on the inputs it actually depends on."""
    mode = Alpha1Formula.parse(mode)
    key = _diag_key(market, copula, grid.steps, mode)
    if key not in _DIAG_CACHE:
        if len(_DIAG_CACHE) > 32:
            _DIAG_CACHE.clear()
        _DIAG_CACHE[key] = build_diagonal(market, copula, grid, mode)
    return _DIAG_CACHE[key]


@dataclass(frozen=True)
class Cascade:
    market: MarketParams
    copula: GumbelParams
    mode: Alpha1Formula
    grid: TimeGrid
    diag: DiagonalTable
    y0: ScenarioSolution

    @property
    def pi0(self) -> np.ndarray:
        """Optimal amounts at t = 0 before any default."""
        return self.y0.pi[0]

    def strategy(self) -> "CascadeStrategy":
        return CascadeStrategy(self.market, self.copula, self.mode, self.grid, self.y0)


def solve_cascade(market: MarketParams, copula: GumbelParams, steps: int = DEFAULT_STEPS,
                  mode="derived", cache: bool = True) -> Cascade:
    mode = Alpha1Formula.parse(mode)
    grid = TimeGrid(0.0, market.T, steps)
    diag = cached_diagonal(market, copula, grid, mode) if cache else build_diagonal(market, copula, grid, mode)
    return Cascade(market, copula, mode, grid, diag, solve_y0(market, copula, grid, diag))


@dataclass(frozen=True)
class StrategyPath:
    """Optimal amounts along one default scenario.

    Before ``tau`` both amounts are held; after it only the survivor's.
    The node at ``tau`` appears in both segments (left and right values).
    """

    pre_times: np.ndarray
    pre_pi: np.ndarray
    tau: Optional[float] = None
    defaulted: Optional[int] = None
    post_times: Optional[np.ndarray] = None
    post_pi: Optional[np.ndarray] = None

    @property
    def survivor(self) -> Optional[int]:
        return None if self.defaulted is None else 3 - self.defaulted

    @property
    def jump(self) -> Optional[float]:
        """Survivor's amount right after tau minus right before."""
        if self.tau is None:
            return None
        return float(self.post_pi[0] - self.pre_pi[-1, self.survivor - 1])


def strategy_path(market: MarketParams, copula: GumbelParams, grid: TimeGrid,
                  scenario=None, mode="derived", y0: Optional[ScenarioSolution] = None,
                  post_steps: Optional[int] = None) -> StrategyPath:
    """Strategy record for no default (``scenario=None``) or ``(name, tau)``."""
    if y0 is None:
        diag = cached_diagonal(market, copula, grid, mode)
        y0 = solve_y0(market, copula, grid, diag)
    nodes = grid.nodes
    if scenario is None:
        return StrategyPath(nodes.copy(), y0.pi.copy())
    defaulted, tau = scenario
    if not 0 < tau < market.T:
        raise DomainError(f"default time must lie in (0, T), got {tau}")
    keep = nodes < tau - 1e-12
    left = np.array([np.interp(tau, nodes, y0.pi[:, 0]), np.interp(tau, nodes, y0.pi[:, 1])])
    pre_t = np.append(nodes[keep], tau)
    pre_pi = np.vstack([y0.pi[keep], left])
    if post_steps is None:
        post_steps = max(2, int(round((market.T - tau) / grid.h)))
    post_grid = TimeGrid(tau, market.T, post_steps)
    sol = solve_y1(market, copula, tau, defaulted, post_grid, mode)
    return StrategyPath(pre_t, pre_pi, tau, defaulted, post_grid.nodes, sol.pi)


@dataclass(frozen=True)
class CascadeStrategy:
    """Feedback-free optimal strategy usable by the simulator.

    Pre-default amounts are interpolated linearly between grid nodes;
    post-default amounts come from level-1 solves at the simulated default
    times.
    """

    market: MarketParams
    copula: GumbelParams
    mode: Alpha1Formula
    grid: TimeGrid
    y0: ScenarioSolution
    post_steps: Optional[int] = None

    def pre(self, t) -> np.ndarray:
        nodes = self.grid.nodes
        t = np.asarray(t, float)
        return np.stack([np.interp(t, nodes, self.y0.pi[:, 0]), np.interp(t, nodes, self.y0.pi[:, 1])], axis=-1)

    def post(self, theta1, defaulted: int):
        """(nodes, amounts) per row for first defaults at ``theta1``."""
        steps = self.post_steps or self.grid.steps
        nodes, _, PI, _ = solve_y1_batch(self.market, self.copula, theta1, defaulted, steps, self.mode)
        return nodes, PI
