"""Slow, independent reference computations used by the tests and ``check``.

None of these share code paths with the production solvers: integrals go
through adaptive quadrature of the raw density, argmins through bisection
or brute-force grid search.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize

from credit_bsde import copula as cop
from credit_bsde.copula import GumbelParams
from credit_bsde.optimizer import PreDefaultProblem


def alpha1_by_quadrature(params: GumbelParams, t: float, theta1: float, defaulted: int) -> float:
    """Tail integral of the ordered density over the second default time."""

    def dens(s):
        return math.exp(float(cop.log_density_ordered(params, theta1, s, defaulted)))

    # split at a few multiples of the survivor's time scale so quad sees the bulk
    aj = params.a2 if defaulted == 1 else params.a1
    edges = [t] + [t + k / aj for k in (1.0, 5.0, 20.0)]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate.quad(dens, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    total += integrate.quad(dens, edges[-1], np.inf, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return total


def first_default_probability(params: GumbelParams, T: float, name: int) -> float:
    """P[``name`` defaults first and before T], by double quadrature of the density."""

    def inner(theta1):
        if theta1 <= 0:
            return 0.0
        return alpha1_by_quadrature(params, theta1, theta1, name)

    return integrate.quad(inner, 0.0, T, epsabs=1e-13, epsrel=1e-10, limit=200)[0]


def post_default_argmin_bisection(sharpe: float, vol: float, p: float, log_weight: float) -> float:
    """Root of p s^2 pi + C e^{p pi} - s lam by plain bisection."""

    def foc(x):
        return p * vol * vol * x - vol * sharpe + math.exp(min(log_weight + p * x, 700.0))

    hi = sharpe / (p * vol)
    lo = hi - 1.0
    while foc(lo) >= 0:
        lo = hi - 2.0 * (hi - lo)
    return optimize.bisect(foc, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def pre_default_grid_search(prob: PreDefaultProblem, center, half_width: float = 4.0,
                            points: int = 81, rounds: int = 8) -> np.ndarray:
    """Minimize the pre-default objective by repeatedly refined grid search.

    Each round evaluates a ``points`` x ``points`` grid and recentres a grid
    four times narrower on the best point.
    """
    c = np.asarray(center, dtype=float)
    w = float(half_width)
    lam, sig, p = prob.lambda0, prob.sigma0, prob.p
    dirs = prob.directions
    lw = np.asarray(prob.log_weights)
    lo_b, hi_b = prob.bounds() if prob.constraint is not None else (None, None)
    for _ in range(rounds):
        g1 = np.linspace(c[0] - w, c[0] + w, points)
        g2 = np.linspace(c[1] - w, c[1] + w, points)
        if lo_b is not None:
            g1 = np.clip(g1, lo_b[0], hi_b[0])
            g2 = np.clip(g2, lo_b[1], hi_b[1])
        P1, P2 = np.meshgrid(g1, g2, indexing="ij")
        pts = np.stack([P1.ravel(), P2.ravel()], axis=1)
        r = lam / p - pts @ sig
        z = lw[None, :] + p * pts @ dirs.T
        with np.errstate(over="ignore"):
            vals = 0.5 * p * np.sum(r * r, axis=1) + np.sum(np.exp(np.minimum(z, 700.0)), axis=1) / p
        c = pts[int(np.argmin(vals))]
        w /= 4.0
    return c


def merton_amount(b: float, sigma: float, p: float) -> float:
    """Single-asset Merton amount b / (p sigma^2)."""
    return b / (p * sigma * sigma)
