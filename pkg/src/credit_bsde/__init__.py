"""Exponential-utility portfolio optimization under two contagious defaults.

The backward cascade of indexed BSDEs reduces to ODEs when the coefficients
and the default density are deterministic.  This package solves that cascade
for a two-name Gumbel-copula model, extracts the optimal strategies and checks
the result by Monte-Carlo simulation.
"""

from credit_bsde.copula import (
    GumbelParams,
    alpha0,
    alpha1,
    density_ordered,
    density_unordered,
    joint_survival,
    sample_default_times,
    survival_correlation,
)
from credit_bsde.market import (
    Interval,
    MarketParams,
    merton_strategy,
    post_default_single_params,
    risk_premium0,
    sigma0_matrix,
)
from credit_bsde.optimizer import (
    PostDefaultProblem,
    PreDefaultProblem,
    solve_post_default,
    solve_pre_default,
)
from credit_bsde.recursion import (
    DiagonalTable,
    ScenarioSolution,
    TimeGrid,
    build_diagonal,
    solve_cascade,
    solve_y0,
    solve_y1,
    strategy_path,
    value_function,
    y2,
)
from credit_bsde.verify import (
    SimConfig,
    SimReport,
    constant_strategy_sweep,
    simulate_expected_utility,
)

__version__ = "0.1.0"

__all__ = [
    "GumbelParams", "alpha0", "alpha1", "density_ordered", "density_unordered",
    "joint_survival", "sample_default_times", "survival_correlation",
    "Interval", "MarketParams", "merton_strategy", "post_default_single_params",
    "risk_premium0", "sigma0_matrix",
    "PostDefaultProblem", "PreDefaultProblem", "solve_post_default", "solve_pre_default",
    "DiagonalTable", "ScenarioSolution", "TimeGrid", "build_diagonal", "solve_cascade",
    "solve_y0", "solve_y1", "strategy_path", "value_function", "y2",
    "SimConfig", "SimReport", "constant_strategy_sweep", "simulate_expected_utility",
]
