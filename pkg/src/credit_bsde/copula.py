"""Gumbel-copula law of two default times.

The joint survival function is

    G(t1, t2) = exp(-u),   u = ((a1 t1)**beta + (a2 t2)**beta)**(1/beta)

so each marginal is exponential with intensity ``a_i`` and ``beta >= 1``
controls the dependence (``beta == 1`` is independence).  Everything here is
evaluated in log space first; exponentials are taken last.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from credit_bsde.errors import DegeneracyError, DomainError, OrderingError

# Below this time the density is singular for beta > 1.
SINGULAR_TIME = 1e-12


class Alpha1Formula(str, enum.Enum):
    """Which closed form to use for the post-default survival density."""

    DERIVED = "derived"
    PAPER = "paper"

    @classmethod
    def parse(cls, value: "str | Alpha1Formula") -> "Alpha1Formula":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(
                f"alpha1_formula must be 'derived' or 'paper', got {value!r}"
            ) from None


@dataclass(frozen=True)
class GumbelParams:
    """Marginal intensities ``a1``, ``a2`` and the dependence parameter ``beta``."""

    a1: float
    a2: float
    beta: float

    def __post_init__(self):
        for name in ("a1", "a2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"copula.{name} must be > 0, got {v}")
        if not (np.isfinite(self.beta) and self.beta >= 1):
            raise ValueError(f"copula.beta must be >= 1, got {self.beta}")

    @property
    def intensities(self) -> tuple[float, float]:
        return (self.a1, self.a2)

    @property
    def independent(self) -> bool:
        return self.beta == 1.0

    @property
    def joint_rate(self) -> float:
        """(a1**beta + a2**beta)**(1/beta), the decay rate of G(t, t)."""
        return float(_lp_norm(self.a1, self.a2, self.beta))


def _lp_norm(x1, x2, beta):
    """(x1**beta + x2**beta)**(1/beta) for nonnegative inputs, overflow-safe."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    hi = np.maximum(x1, x2)
    lo = np.minimum(x1, x2)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), 0.0)
    return hi * (1.0 + r**beta) ** (1.0 / beta)


def _u(params: GumbelParams, t1, t2):
    return _lp_norm(params.a1 * np.asarray(t1, float), params.a2 * np.asarray(t2, float), params.beta)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def _check_nonneg(*ts):
    for t in ts:
        if np.any(np.asarray(t) < 0) or np.any(~np.isfinite(np.asarray(t, float))):
            raise DomainError(f"times must be finite and >= 0, got {t}")


def _check_density_times(params: GumbelParams, *ts):
    for t in ts:
        t = np.asarray(t, float)
        if np.any(t <= 0) or np.any(~np.isfinite(t)):
            raise DomainError(f"density times must be finite and > 0, got {t}")
        if params.beta > 1 and np.any(t <= SINGULAR_TIME):
            raise DomainError(
                f"density is singular at t <= {SINGULAR_TIME:g} when beta > 1, got {t}"
            )


# -- log-space kernels (no validation; used by the recursion on hot paths) --


def log_joint_survival(params: GumbelParams, t1, t2):
    return -_u(params, t1, t2)


def log_density_unordered(params: GumbelParams, t1, t2):
    """log of the joint density of the unordered pair (tau1, tau2)."""
    t1 = np.asarray(t1, float)
    t2 = np.asarray(t2, float)
    b = params.beta
    u = _u(params, t1, t2)
    if b == 1.0:
        return math.log(params.a1) + math.log(params.a2) - u
    with np.errstate(divide="ignore"):
        return (
            -u
            + b * (math.log(params.a1) + math.log(params.a2))
            + (b - 1.0) * (np.log(t1) + np.log(t2))
            + (1.0 - 2.0 * b) * np.log(u)
            + np.log(u + b - 1.0)
        )


def log_density_ordered(params: GumbelParams, theta1, theta2, first_name: int):
    """log density of (first default at theta1 by ``first_name``, second at theta2)."""
    if first_name == 1:
        return log_density_unordered(params, theta1, theta2)
    return log_density_unordered(params, theta2, theta1)


def log_alpha1(params: GumbelParams, t, theta1, defaulted_name: int, mode=Alpha1Formula.DERIVED):
    """log of the survival density of the remaining name after a first default.

    ``derived`` is minus the partial derivative of G in the defaulted name's
    coordinate, evaluated with the survivor's coordinate at ``t``.  ``paper``
    replaces the factor u**(1-beta) by u.
    """
    mode = Alpha1Formula.parse(mode)
    t = np.asarray(t, float)
    theta1 = np.asarray(theta1, float)
    b = params.beta
    ai = params.a1 if defaulted_name == 1 else params.a2
    aj = params.a2 if defaulted_name == 1 else params.a1
    u = _lp_norm(ai * theta1, aj * t, b)
    with np.errstate(divide="ignore"):
        out = b * math.log(ai) - u
        if b != 1.0:
            out = out + (b - 1.0) * np.log(theta1)
        if mode is Alpha1Formula.DERIVED:
            if b != 1.0:
                out = out + (1.0 - b) * np.log(u)
        else:
            out = out + np.log(u)
    return out


# -- public, validated API --


def joint_survival(params: GumbelParams, theta1, theta2):
    """P[tau1 > theta1, tau2 > theta2]."""
    _check_nonneg(theta1, theta2)
    return _scalar(np.exp(log_joint_survival(params, theta1, theta2)))


def density_unordered(params: GumbelParams, theta1, theta2):
    """Joint density of (tau1, tau2), the mixed partial of :func:`joint_survival`."""
    _check_density_times(params, theta1, theta2)
    return _scalar(np.exp(log_density_unordered(params, theta1, theta2)))


def density_ordered(params: GumbelParams, theta1, theta2, first_name: int, second_name: int):
    """Density of the ranked default times with index marks.

    ``theta1 <= theta2`` are the first and second default times and
    ``first_name`` is the name that defaulted first.
    """
    if {first_name, second_name} != {1, 2}:
        raise DomainError(f"names must be a permutation of (1, 2), got ({first_name}, {second_name})")
    _check_density_times(params, theta1, theta2)
    if np.any(np.asarray(theta1) > np.asarray(theta2)):
        raise OrderingError(f"need theta1 <= theta2, got {theta1} > {theta2}")
    return _scalar(np.exp(log_density_ordered(params, theta1, theta2, first_name)))


def alpha1(params: GumbelParams, t, theta1, defaulted_name: int, mode="derived"):
    """Density of a first default at ``theta1`` by ``defaulted_name`` with the
    other name still alive at ``t``."""
    if defaulted_name not in (1, 2):
        raise DomainError(f"defaulted_name must be 1 or 2, got {defaulted_name}")
    _check_density_times(params, theta1)
    if np.any(np.asarray(theta1) > np.asarray(t)):
        raise OrderingError(f"need theta1 <= t, got theta1={theta1}, t={t}")
    return _scalar(np.exp(log_alpha1(params, t, theta1, defaulted_name, mode)))


def alpha0(params: GumbelParams, t):
    """Probability that neither name has defaulted by ``t``; equals G(t, t)."""
    return joint_survival(params, t, t)


def survival_correlation(params: GumbelParams, T: float) -> float:
    """Linear correlation of the survival indicators 1{tau1 > T}, 1{tau2 > T}."""
    if not T > 0:
        raise DomainError(f"horizon must be > 0, got {T}")
    p1 = math.exp(-params.a1 * T)
    p2 = math.exp(-params.a2 * T)
    q1 = -math.expm1(-params.a1 * T)
    q2 = -math.expm1(-params.a2 * T)
    var = p1 * q1 * p2 * q2
    if not var > 1e-300:
        raise DegeneracyError(
            f"survival indicators are degenerate at T={T} (variance product {var:g})"
        )
    g = float(joint_survival(params, T, T))
    return (g - p1 * p2) / math.sqrt(var)


# -- sampling --


def positive_stable(alpha: float, rng: np.random.Generator, size=None):
    """Positive stable variable with Laplace transform exp(-s**alpha), 0 < alpha <= 1.

    Chambers-Mallows-Stuck / Kanter representation.
    """
    if alpha == 1.0:
        return np.ones(size) if size is not None else 1.0
    # uniform on the open interval keeps sin(theta) away from 0
    theta = np.pi * (1.0 - rng.uniform(0.0, 1.0, size))
    w = rng.standard_exponential(size)
    return (
        np.sin(alpha * theta) / np.sin(theta) ** (1.0 / alpha)
        * (np.sin((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_default_times(params: GumbelParams, rng: np.random.Generator, size=None):
    """Draw (tau1, tau2) by the Marshall-Olkin frailty construction.

    With V positive stable of index 1/beta and E1, E2 unit exponentials,
    tau_i = (E_i / V)**(1/beta) / a_i has joint survival G.
    """
    shape = () if size is None else tuple(np.atleast_1d(size))
    v = positive_stable(1.0 / params.beta, rng, shape)
    e = rng.standard_exponential((2,) + shape)
    tau1 = (e[0] / v) ** (1.0 / params.beta) / params.a1
    tau2 = (e[1] / v) ** (1.0 / params.beta) / params.a2
    if size is None:
        return float(tau1), float(tau2)
    return tau1, tau2


def _log_conditional_survival(params: GumbelParams, t1, theta):
    """log P[tau2 > theta | tau1 = t1]."""
    b = params.beta
    u = _u(params, t1, theta)
    x = params.a1 * t1
    if b == 1.0:
        return -params.a2 * theta
    return (1.0 - b) * (np.log(u) - np.log(x)) - (u - x)


def sample_default_times_conditional(params: GumbelParams, rng: np.random.Generator, size: int,
                                     tol: float = 1e-13):
    """Reference sampler: tau1 by inversion, tau2 by bisection on its
    conditional survival given tau1.  Slow; used to cross-check the frailty
    sampler."""
    tau1 = rng.standard_exponential(size) / params.a1
    target = np.log(rng.uniform(size=size))
    lo = np.zeros(size)
    hi = np.full(size, 1.0 / params.a2)
    for _ in range(200):
        need = _log_conditional_survival(params, tau1, hi) > target
        if not need.any():
            break
        hi = np.where(need, 2.0 * hi, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = _log_conditional_survival(params, tau1, mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.max(hi - lo) <= tol * np.max(hi):
            break
    return tau1, 0.5 * (lo + hi)
