"""Pointwise minimizations inside the BSDE generators.

Post-default (one survivor, scalar amount pi)::

    g(pi) = (p/2) (lam/p - sigma pi)**2 + (C/p) exp(p pi)

Pre-default (two names, pi = (pi1, pi2))::

    h(pi) = (p/2) |lam0/p - sigma0' pi|**2
            + (1/p) [W1 exp(p (pi1 - gamma2 pi2)) + W2 exp(p (pi2 - gamma1 pi1))]

Both objectives are smooth and strictly convex.  The jump weights are carried
as logarithms because they span hundreds of orders of magnitude along the
cascade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from credit_bsde.errors import SolverError
from credit_bsde.market import Interval

EXP_GUARD = 700.0
GRAD_TOL = 1e-10
MAX_NEWTON = 100


# ---------------------------------------------------------------------------
# Lambert W (principal branch, nonnegative argument)
# ---------------------------------------------------------------------------


def lambert_w_log(log_x, tol=4e-16, maxiter=50):
    """Principal W(x) for x = exp(log_x) >= 0, without forming x.

    Halley iteration on ln(w) + w = log_x, which is w e^w = x in log form.
    """
    L = np.asarray(log_x, dtype=float)
    with np.errstate(over="ignore"):
        w = np.where(L < 1.0, np.log1p(np.exp(np.minimum(L, 1.0))), L - np.log(np.maximum(L, 1.0)))
    w = np.where(np.isneginf(L), 0.0, w)
    live = np.isfinite(L)
    tiny = live & (L < -40.0)
    # W(x) = x - x**2 + ... is exact to double precision for x < e**-40
    w = np.where(tiny, np.exp(np.where(tiny, L, 0.0)), w)
    live &= ~tiny
    for _ in range(maxiter):
        if not live.any():
            break
        wl = np.where(live, w, 1.0)
        f = np.log(wl) + wl - np.where(live, L, 1.0)
        d1 = 1.0 / wl + 1.0
        d2 = -1.0 / wl**2
        step = 2.0 * f * d1 / (2.0 * d1 * d1 - f * d2)
        new = np.where(live, np.maximum(wl - step, 0.5 * wl), w)
        done = np.abs(new - w) <= tol * np.maximum(new, 1e-300)
        w = new
        live &= ~done
    return float(w) if np.ndim(w) == 0 else w


def lambert_w(x):
    """Principal branch W(x) for x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("lambert_w is implemented for x >= 0 only")
    with np.errstate(divide="ignore"):
        return lambert_w_log(np.log(x))


# ---------------------------------------------------------------------------
# Post-default problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PostDefaultProblem:
    """Survivor's pointwise problem; ``jump_weight`` is C = alpha e^{-p y}."""

    sharpe: float
    vol: float
    p: float
    jump_weight: float
    constraint: Optional[Interval] = None

    def __post_init__(self):
        if not self.vol > 0:
            raise ValueError(f"vol must be > 0, got {self.vol}")
        if not self.p > 0:
            raise ValueError(f"p must be > 0, got {self.p}")
        if not self.jump_weight >= 0:
            raise ValueError(f"jump_weight must be >= 0, got {self.jump_weight}")

    @property
    def log_weight(self) -> float:
        return -math.inf if self.jump_weight == 0 else math.log(self.jump_weight)

    def objective(self, pi):
        pi = np.asarray(pi, dtype=float)
        lam, s, p = self.sharpe, self.vol, self.p
        with np.errstate(over="ignore"):
            return 0.5 * p * (lam / p - s * pi) ** 2 + np.exp(self.log_weight + p * pi) / p

    def foc(self, pi):
        """d g / d pi; zero at the unconstrained minimizer."""
        lam, s, p = self.sharpe, self.vol, self.p
        return p * s * s * pi - s * lam + np.exp(self.log_weight + p * pi)


def post_default_foc(sharpe, vol, p, log_weight, pi):
    with np.errstate(over="ignore"):
        return p * vol * vol * pi - vol * sharpe + np.exp(log_weight + p * pi)


def post_default_argmin(sharpe, vol, p, log_weight, tol=4e-16, maxiter=100):
    """Unconstrained root of the first-order condition, vectorized over ``log_weight``.

    The condition p s^2 pi + C e^{p pi} = s lam has a strictly increasing left
    side, so the root is unique.  The Lambert-W closed form gives the start;
    Newton polishes it inside a bracket that falls back to bisection when a
    step leaves it.
    """
    lw = np.atleast_1d(np.asarray(log_weight, dtype=float))
    s2p = p * vol * vol
    hi = np.full(lw.shape, sharpe / (p * vol))
    zero = np.isneginf(lw)
    x = np.where(zero, hi, post_default_argmin_lambert(sharpe, vol, p, np.where(zero, 0.0, lw)))
    # the root is below hi; push lo down until the condition turns negative
    lo = np.minimum(x, hi) - 1.0
    step = np.ones_like(hi)
    for _ in range(2100):
        neg = zero | (post_default_foc(sharpe, vol, p, lw, lo) < 0)
        if neg.all():
            break
        lo = np.where(neg, lo, lo - step)
        step = np.where(neg, step, 2.0 * step)
    else:  # pragma: no cover - the condition is unbounded below
        raise SolverError("could not bracket the post-default first-order condition")
    x = np.clip(x, lo, hi)
    active = ~zero
    for _ in range(maxiter):
        if not active.any():
            break
        with np.errstate(over="ignore"):
            e = np.exp(lw + p * x)
        F = s2p * x - vol * sharpe + e
        dF = s2p + p * e
        lo = np.where(active & (F < 0), x, lo)
        hi = np.where(active & (F > 0), x, hi)
        newton = x - F / dF
        bad = ~np.isfinite(newton) | (newton < lo) | (newton > hi)
        new = np.where(bad, 0.5 * (lo + hi), newton)
        scale = 1.0 + np.abs(x)
        conv = (F == 0) | (np.abs(new - x) <= tol * scale) | (hi - lo <= tol * scale)
        conv |= np.abs(F) <= 1e-15 * (np.abs(vol * sharpe) + s2p * np.abs(x) + e)
        x = np.where(active, new, x)
        active &= ~conv
    if active.any():
        raise SolverError("post-default Newton-bisection did not converge")
    return x if np.ndim(log_weight) else float(x[0])


def post_default_value(sharpe, vol, p, log_weight, pi):
    with np.errstate(over="ignore"):
        return 0.5 * p * (sharpe / p - vol * pi) ** 2 + np.exp(log_weight + p * pi) / p


def post_default_argmin_lambert(sharpe, vol, p, log_weight):
    """Closed form pi = lam/(p s) - W((C/s^2) e^{lam/s}) / p (cross-check)."""
    log_x = np.asarray(log_weight, float) - 2.0 * math.log(vol) + sharpe / vol
    return sharpe / (p * vol) - lambert_w_log(log_x) / p


def solve_post_default(prob: PostDefaultProblem):
    """Return ``(min value, argmin)`` of the survivor's problem."""
    pi = post_default_argmin(prob.sharpe, prob.vol, prob.p, prob.log_weight)
    if prob.constraint is not None:
        pi = float(prob.constraint.clip(pi))
    return float(prob.objective(pi)), float(pi)


# ---------------------------------------------------------------------------
# Pre-default problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreDefaultProblem:
    """Two-asset pointwise problem before any default.

    ``exp_weights`` are W_i = e^{-p y} e^{p D_i(t)}.  Pass ``log_weights``
    instead when the weights would under- or overflow.
    """

    lambda0: np.ndarray
    sigma0: np.ndarray
    p: float
    gamma: tuple
    exp_weights: tuple = (0.0, 0.0)
    constraint: Optional[tuple] = None
    log_weights: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "lambda0", np.asarray(self.lambda0, dtype=float))
        object.__setattr__(self, "sigma0", np.asarray(self.sigma0, dtype=float))
        if self.log_weights is None:
            if min(self.exp_weights) < 0:
                raise ValueError(f"exp_weights must be >= 0, got {self.exp_weights}")
            with np.errstate(divide="ignore"):
                lw = tuple(float(v) for v in np.log(np.asarray(self.exp_weights, dtype=float)))
            object.__setattr__(self, "log_weights", lw)
        if abs(np.linalg.det(self.sigma0)) < 1e-300:
            raise ValueError("sigma0 must have full rank")

    @property
    def directions(self) -> np.ndarray:
        """Rows are the wealth-jump directions for a default of name 1, name 2."""
        g1, g2 = self.gamma
        return np.array([[1.0, -g2], [-g1, 1.0]])

    def _exponents(self, pi):
        return np.asarray(self.log_weights) + self.p * (self.directions @ pi)

    def objective(self, pi, guard=False):
        pi = np.asarray(pi, dtype=float)
        r = self.lambda0 / self.p - self.sigma0.T @ pi
        z = self._exponents(pi)
        if guard:
            z = np.minimum(z, EXP_GUARD)
        with np.errstate(over="ignore"):
            return 0.5 * self.p * r @ r + np.sum(np.exp(z)) / self.p

    def gradient(self, pi):
        pi = np.asarray(pi, dtype=float)
        e = np.exp(self._exponents(pi))
        return -self.sigma0 @ (self.lambda0 - self.p * self.sigma0.T @ pi) + self.directions.T @ e

    def hessian(self, pi):
        pi = np.asarray(pi, dtype=float)
        e = np.exp(self._exponents(pi))
        v = self.directions
        return self.p * (self.sigma0 @ self.sigma0.T + (v.T * e) @ v)

    def bounds(self):
        if self.constraint is None:
            return np.full(2, -np.inf), np.full(2, np.inf)
        return (np.array([c.lo for c in self.constraint]), np.array([c.hi for c in self.constraint]))

    def kkt_residual(self, pi):
        """Norm of the projected-gradient step; zero exactly at the box minimizer."""
        lo, hi = self.bounds()
        pi = np.asarray(pi, dtype=float)
        return float(np.linalg.norm(np.clip(pi - self.gradient(pi), lo, hi) - pi))


def _merton_point(prob: PreDefaultProblem) -> np.ndarray:
    s = prob.sigma0
    return np.linalg.solve(s @ s.T, s @ prob.lambda0) / prob.p


def solve_pre_default(prob: PreDefaultProblem, start=None):
    """Return ``(min value, argmin)`` by damped (projected) Newton.

    Starts from the Merton point unless ``start`` is given.  Armijo
    backtracking with factor 0.5 and c = 1e-4; stops when the (projected)
    gradient norm drops below 1e-10.  Non-convergence raises SolverError.
    """
    lo, hi = prob.bounds()
    pi = np.clip(_merton_point(prob) if start is None else np.asarray(start, float), lo, hi)
    constrained = prob.constraint is not None
    for _ in range(MAX_NEWTON):
        if np.any(prob._exponents(pi) > EXP_GUARD):
            raise SolverError(f"pre-default iterate {pi} overflows the jump terms")
        g = prob.gradient(pi)
        res = prob.kkt_residual(pi) if constrained else float(np.linalg.norm(g))
        if res < GRAD_TOL:
            return float(prob.objective(pi)), pi
        H = prob.hessian(pi)
        if constrained:
            eps = 1e-12
            active = ((pi <= lo + eps) & (g > 0)) | ((pi >= hi - eps) & (g < 0))
            d = np.zeros(2)
            free = ~active
            if free.any():
                d[free] = -np.linalg.solve(H[np.ix_(free, free)], g[free])
        else:
            d = -np.linalg.solve(H, g)
        h0 = prob.objective(pi)
        step = 1.0
        while True:
            trial = np.clip(pi + step * d, lo, hi)
            if prob.objective(trial, guard=True) <= h0 + 1e-4 * (g @ (trial - pi)):
                break
            step *= 0.5
            if step < 1e-30:
                break
        if np.array_equal(trial, pi):
            # no representable progress; converged to rounding
            res = prob.kkt_residual(pi) if constrained else float(np.linalg.norm(g))
            if res < 1e3 * GRAD_TOL:
                return float(prob.objective(pi)), pi
            raise SolverError(f"pre-default Newton stalled at {pi} (residual {res:.3g})")
        pi = trial
    raise SolverError(f"pre-default Newton did not converge in {MAX_NEWTON} iterations")
