"""Two-name market: pre-default Black-Scholes pair, single survivor after the
first default, nothing tradable after the second."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from credit_bsde.errors import DomainError


@dataclass(frozen=True)
class Interval:
    """Closed trading interval ``[lo, hi]`` for one asset; must contain 0."""

    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if not (self.lo <= 0.0 <= self.hi):
            raise ValueError(f"constraint interval [{self.lo}, {self.hi}] must contain 0")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) or math.isfinite(self.hi)

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)


def _pair(x, name):
    if len(x) != 2:
        raise ValueError(f"market.{name} needs two entries, got {x!r}")
    return (float(x[0]), float(x[1]))


@dataclass(frozen=True)
class MarketParams:
    """All asset, contagion and preference coefficients.

    ``gamma[i]`` is the relative jump of name ``i+1`` when the *other* name
    defaults.  ``constraint_pre`` holds one interval per asset before any
    default, ``constraint_post`` the survivor's interval; ``None`` means
    unconstrained.
    """

    b0: tuple = (0.02, 0.02)
    sigma0_vol: tuple = (0.1, 0.1)
    rho: float = 0.0
    b1: tuple = (0.01, 0.01)
    sigma1_vol: tuple = (0.2, 0.2)
    gamma: tuple = (0.0, 0.0)
    p: float = 1.0
    T: float = 1.0
    constraint_pre: Optional[tuple] = None
    constraint_post: Optional[Interval] = None

    def __post_init__(self):
        for name in ("b0", "sigma0_vol", "b1", "sigma1_vol", "gamma"):
            object.__setattr__(self, name, _pair(getattr(self, name), name))
        if min(self.sigma0_vol) <= 0 or min(self.sigma1_vol) <= 0:
            raise ValueError("market volatilities must be > 0")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"market.rho must lie in (-1, 1), got {self.rho}")
        if min(self.gamma) < -1.0:
            raise ValueError(f"market.gamma entries must be >= -1, got {self.gamma}")
        if not self.p > 0:
            raise ValueError(f"market.p must be > 0, got {self.p}")
        if not self.T > 0:
            raise ValueError(f"market.T must be > 0, got {self.T}")
        if self.constraint_pre is not None:
            if len(self.constraint_pre) != 2 or not all(
                isinstance(c, Interval) for c in self.constraint_pre
            ):
                raise ValueError("market.constraint_pre must be two Interval objects")
            object.__setattr__(self, "constraint_pre", tuple(self.constraint_pre))

    @property
    def constrained_pre(self) -> bool:
        return self.constraint_pre is not None and any(c.bounded for c in self.constraint_pre)

    def replace(self, **changes) -> "MarketParams":
        from dataclasses import replace

        return replace(self, **changes)


def sigma0_matrix(m: MarketParams) -> np.ndarray:
    """Upper-triangular volatility matrix; asset i loads on row i."""
    s1, s2 = m.sigma0_vol
    return np.array([[s1 * math.sqrt(1.0 - m.rho**2), s1 * m.rho], [0.0, s2]])


def risk_premium0(m: MarketParams) -> np.ndarray:
    """Pre-default risk premium: the solution of sigma0 @ lam = b0."""
    (b1, b2), (s1, s2) = m.b0, m.sigma0_vol
    lam1 = (b1 / s1 - m.rho * b2 / s2) / math.sqrt(1.0 - m.rho**2)
    return np.array([lam1, b2 / s2])


def merton_strategy(m: MarketParams) -> np.ndarray:
    """No-default optimal amounts (1/p) (sigma sigma')^-1 b0.

    With box constraints the quadratic is minimized over the box by the
    projected Newton solver.
    """
    sig = sigma0_matrix(m)
    pi = np.linalg.solve(sig @ sig.T, np.asarray(m.b0)) / m.p
    if not m.constrained_pre:
        return pi
    from credit_bsde.optimizer import PreDefaultProblem, solve_pre_default

    prob = PreDefaultProblem(
        lambda0=risk_premium0(m), sigma0=sig, p=m.p, gamma=m.gamma,
        exp_weights=(0.0, 0.0), constraint=m.constraint_pre,
    )
    return solve_pre_default(prob)[1]


@dataclass(frozen=True)
class SurvivorCoefficients:
    survivor: int
    drift: float
    vol: float
    sharpe: float


def post_default_single_params(m: MarketParams, survivor: int) -> SurvivorCoefficients:
    """Black-Scholes coefficients of ``survivor`` after the other name defaulted."""
    if survivor not in (1, 2):
        raise DomainError(f"survivor must be 1 or 2, got {survivor}")
    b = m.b1[survivor - 1]
    s = m.sigma1_vol[survivor - 1]
    return SurvivorCoefficients(survivor, b, s, b / s)


@dataclass(frozen=True)
class NoTrading:
    """Both names defaulted; there is nothing left to trade."""

    tradable: tuple = field(default=())

    def __getattr__(self, name):
        if name.startswith("__"):
            raise AttributeError(name)
        raise AttributeError(f"no coefficients after both defaults (asked for {name!r})")


def regime(m: MarketParams, n_defaults: int, survivor: Optional[int] = None):
    """Coefficients of the regime with ``n_defaults`` names gone."""
    if n_defaults == 0:
        return sigma0_matrix(m), np.asarray(m.b0), risk_premium0(m)
    if n_defaults == 1:
        if survivor is None:
            raise DomainError("one-default regime needs the survivor's index")
        return post_default_single_params(m, survivor)
    if n_defaults == 2:
        return NoTrading()
    raise DomainError(f"n_defaults must be 0, 1 or 2, got {n_defaults}")
