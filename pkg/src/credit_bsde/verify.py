"""Monte-Carlo check that the cascade strategy attains the solved value.

Each path draws its two default times from the copula first, then Euler
increments on a uniform mesh.  The mesh interval that contains a default is
split at the default time and each piece gets its own Gaussian increments,
so the default-time law is exact.  Wealth starts at 0:

* before any default, dX = pi' (b0 dt + sigma0 dW);
* at the first default of name i, X jumps by -pi_i + gamma_j pi_j;
* afterwards, dX = pi (b^{j,1} dt + sigma^{j,1} dB^j) with
  B^1 = sqrt(1 - rho^2) W^1 + rho W^2 and B^2 = W^2;
* at the survivor's default X jumps by -pi and is frozen.

Jumps use the amount held just before the default time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from credit_bsde.copula import GumbelParams, sample_default_times
from credit_bsde.errors import SimulationError
from credit_bsde.market import MarketParams, sigma0_matrix
from credit_bsde.recursion import CascadeStrategy

EXP_LIMIT = 700.0
MAX_FAILURE_FRACTION = 1e-4
CHUNK = 2048


@dataclass(frozen=True)
class SimConfig:
    paths: int = 100_000
    seed: int = 0
    substeps: int = 4
    antithetic: bool = False
    grid_steps: int = 200

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 1:
            raise ValueError(f"sim.paths must be >= 1, got {self.paths}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"sim.substeps must be >= 1, got {self.substeps}")
        if int(self.grid_steps) != self.grid_steps or self.grid_steps < 1:
            raise ValueError(f"sim.grid_steps must be >= 1, got {self.grid_steps}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"sim.seed must be a nonnegative integer, got {self.seed}")
        if self.antithetic and self.paths % 2:
            raise ValueError("sim.paths must be even with antithetic sampling")


@dataclass(frozen=True)
class SimReport:
    """Estimate of E[-exp(-p X_T)] from x = 0.

    ``counts[k]`` is the number of paths with exactly k defaults by T.
    ``samples`` holds the per-path utilities (antithetic pairs averaged) in
    path order; it is what common-random-number comparisons pair on.
    """

    mean: float
    std_error: float
    counts: tuple
    certainty_equivalent: float
    failures: int
    paths: int
    samples: np.ndarray = field(repr=False, compare=False, default=None)

    def __eq__(self, other):
        if not isinstance(other, SimReport):
            return NotImplemented
        return (
            (self.mean, self.std_error, self.counts, self.certainty_equivalent, self.failures, self.paths)
            == (other.mean, other.std_error, other.counts, other.certainty_equivalent, other.failures, other.paths)
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------


class _Constant:
    """Hold the same amounts in both names; the survivor keeps its own amount."""

    def __init__(self, pi):
        self.pi = np.asarray(pi, dtype=float).reshape(2)

    def pre(self, t):
        t = np.asarray(t, float)
        return np.broadcast_to(self.pi, t.shape + (2,))

    def post_evaluator(self, theta1, defaulted):
        amount = self.pi[2 - defaulted]
        return lambda rows, t: np.full(np.shape(t), amount)


class _Cascade:
    def __init__(self, strat: CascadeStrategy):
        self.s = strat

    def pre(self, t):
        return self.s.pre(t)

    def post_evaluator(self, theta1, defaulted):
        if theta1.size == 0:
            return lambda rows, t: np.zeros(np.shape(t))
        nodes, pi = self.s.post(theta1, defaulted)
        steps = nodes.shape[1] - 1
        t0 = nodes[:, 0]
        h = (nodes[:, -1] - t0) / steps

        def ev(rows, t):
            x = (t - t0[rows]) / h[rows]
            k = np.clip(np.floor(x).astype(int), 0, steps - 1)
            w = np.clip(x - k, 0.0, 1.0)
            return (1.0 - w) * pi[rows, k] + w * pi[rows, k + 1]

        return ev


def _wrap(strategy):
    if isinstance(strategy, CascadeStrategy):
        return _Cascade(strategy)
    if hasattr(strategy, "pre") and hasattr(strategy, "post_evaluator"):
        return strategy
    return _Constant(strategy)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def _stream(seed: int, chunk: int, purpose: int) -> np.random.Generator:
    # counter-based stream per (chunk, purpose): a path's draws do not depend
    # on how many chunks there are or in which order they run
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk, purpose))))


def _chunk_sizes(cfg: SimConfig):
    n, out = cfg.paths, []
    while n > 0:
        out.append(min(CHUNK, n))
        n -= out[-1]
    return out


def _sample_defaults(copula, cfg: SimConfig):
    t1, t2 = [], []
    for c, n in enumerate(_chunk_sizes(cfg)):
        m = n // 2 if cfg.antithetic else n
        a, b = sample_default_times(copula, _stream(cfg.seed, c, 0), m)
        if cfg.antithetic:
            a, b = np.concatenate([a, a]), np.concatenate([b, b])
        t1.append(a)
        t2.append(b)
    return np.concatenate(t1), np.concatenate(t2)


def _simulate_paths(market, copula, strat, cfg: SimConfig):
    """Terminal wealth of every path and its number of defaults by T."""
    T = market.T
    tau1, tau2 = _sample_defaults(copula, cfg)
    first = np.minimum(tau1, tau2)
    second = np.maximum(tau1, tau2)
    name_first = np.where(tau1 <= tau2, 1, 2)
    hit1 = first < T
    hit2 = second < T
    surv = 3 - name_first

    # post-default amounts, solved once for all paths of each defaulted name
    post = {}
    local = np.zeros(first.size, dtype=int)
    for name in (1, 2):
        rows = np.flatnonzero(hit1 & (name_first == name))
        local[rows] = np.arange(rows.size)
        post[name] = strat.post_evaluator(first[rows], name)

    def post_amount(idx, t):
        out = np.empty(idx.size)
        for name in (1, 2):
            sel = name_first[idx] == name
            if sel.any():
                out[sel] = post[name](local[idx[sel]], t[sel])
        return out

    sig0 = sigma0_matrix(market)
    b0 = np.asarray(market.b0)
    gam = np.asarray(market.gamma)
    rho_c = math.sqrt(1.0 - market.rho**2)
    sb = np.asarray(market.b1)[surv - 1]
    sv = np.asarray(market.sigma1_vol)[surv - 1]

    M = cfg.grid_steps * cfg.substeps
    mesh = np.linspace(0.0, T, M + 1)
    t_lo, t_hi = mesh[:-1], mesh[1:]
    pre_pi = np.asarray(strat.pre(t_lo))  # (M, 2)
    drift0 = pre_pi @ b0
    load0 = pre_pi @ sig0  # row k: loadings of pi_k on (W1, W2)

    x = np.empty(first.size)
    start = 0
    for c, n in enumerate(_chunk_sizes(cfg)):
        sl = slice(start, start + n)
        start += n
        m = n // 2 if cfg.antithetic else n
        z = _stream(cfg.seed, c, 1).standard_normal((4, m, M))
        if cfg.antithetic:
            z = np.concatenate([z, -z], axis=1)
        f, s_, nf = first[sl], second[sl], name_first[sl]
        # regime 0: Euler pieces [t_k, min(first, t_{k+1})]
        d0 = np.clip(np.minimum(f[:, None], t_hi) - t_lo, 0.0, None)
        q0 = np.sqrt(d0)
        xc = d0 @ drift0 + np.sum(q0 * (z[0] * load0[:, 0] + z[1] * load0[:, 1]), axis=1)
        # first default: jump with the amounts held just before it
        idx = np.flatnonzero(hit1[sl])
        if idx.size:
            pl = np.asarray(strat.pre(f[idx]))
            r = np.arange(idx.size)
            i = nf[idx] - 1
            xc[idx] += -pl[r, i] + gam[1 - i] * pl[r, 1 - i]
            # regime 1: pieces [max(first, t_k), min(second, t_{k+1})]
            fi = f[idx, None]
            lo = np.maximum(fi, t_lo)
            d1 = np.clip(np.minimum(s_[idx, None], t_hi) - lo, 0.0, None)
            kk = np.nonzero(d1 > 0)
            gi = idx[kk[0]] + sl.start
            amt = post_amount(gi, lo[kk])
            dd = d1[kk]
            w1 = z[2][idx][kk] * np.sqrt(dd)
            w2 = z[3][idx][kk] * np.sqrt(dd)
            su = surv[gi]
            dB = np.where(su == 1, rho_c * w1 + market.rho * w2, w2)
            inc = amt * (sb[gi] * dd + sv[gi] * dB)
            xc[idx] += np.bincount(kk[0], weights=inc, minlength=idx.size)
            # second default: the survivor's position is lost
            j2 = np.flatnonzero(hit2[sl])
            if j2.size:
                xc[j2] -= post_amount(j2 + sl.start, s_[j2])
        x[sl] = xc
    ndef = hit1.astype(int) + hit2.astype(int)
    return x, ndef


def _report(x, ndef, market, cfg: SimConfig) -> SimReport:
    p = market.p
    expo = -p * x
    bad = ~(expo <= EXP_LIMIT)
    u = np.where(bad, np.nan, -np.exp(np.minimum(expo, EXP_LIMIT)))
    if cfg.antithetic:
        # pairs sit in the two halves of every chunk
        parts, start = [], 0
        for n in _chunk_sizes(cfg):
            h = n // 2
            parts.append(0.5 * (u[start:start + h] + u[start + h:start + n]))
            start += n
        u = np.concatenate(parts)
    failures = int(np.count_nonzero(np.isnan(u)))
    if failures > MAX_FAILURE_FRACTION * u.size:
        raise SimulationError(
            f"utility overflow on {failures} of {u.size} samples (exponent above {EXP_LIMIT:g})"
        )
    good = u[~np.isnan(u)]
    mean = float(np.sum(good) / good.size)
    se = float(np.std(good, ddof=1) / math.sqrt(good.size)) if good.size > 1 else 0.0
    ce = -math.log(-mean) / p
    counts = tuple(int(c) for c in np.bincount(ndef, minlength=3))
    return SimReport(mean, se, counts, ce, failures, cfg.paths, u)


def simulate_expected_utility(market: MarketParams, copula: GumbelParams, strategy,
                              cfg: SimConfig) -> SimReport:
    """Estimate E[U(X_T)] for a constant 2-vector or a :class:`CascadeStrategy`."""
    x, ndef = _simulate_paths(market, copula, _wrap(strategy), cfg)
    return _report(x, ndef, market, cfg)


def expected_utility_target(y0_at_zero: float, p: float) -> float:
    """-exp(p Y0_0), the value at x = 0 implied by the cascade."""
    return -math.exp(p * y0_at_zero)


# ---------------------------------------------------------------------------
# brute-force comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    pi: tuple
    report: SimReport
    diff: Optional[float] = None
    pooled_se: Optional[float] = None
    paired_se: Optional[float] = None

    def dominated(self, k: float = 3.0) -> bool:
        """True if this constant strategy does not beat the reference by more than k pooled SE."""
        return self.diff is None or self.diff <= k * self.pooled_se


def compare_reports(candidate: SimReport, reference: SimReport):
    """(mean difference, pooled SE, paired SE) of candidate minus reference."""
    diff = candidate.mean - reference.mean
    pooled = math.hypot(candidate.std_error, reference.std_error)
    paired = math.nan
    a, b = candidate.samples, reference.samples
    if a is not None and b is not None and a.shape == b.shape and a.size > 1:
        d = a - b
        d = d[~np.isnan(d)]
        paired = float(np.std(d, ddof=1) / math.sqrt(d.size))
    return diff, pooled, paired


def constant_strategy_sweep(market: MarketParams, copula: GumbelParams, grid: Sequence,
                            cfg: SimConfig, reference: Optional[SimReport] = None) -> list:
    """Simulate each constant (pi1, pi2) in ``grid`` with common random numbers.

    With ``reference`` (usually the cascade strategy's report under the same
    ``cfg``) each row also carries its difference to it.
    """
    pts = np.asarray(grid, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise ValueError("sweep grid must be finite")
    # for a constant strategy the terminal wealth is linear in (pi1, pi2), so
    # two basis runs give every grid point on exactly the same paths
    x1, ndef = _simulate_paths(market, copula, _Constant((1.0, 0.0)), cfg)
    x2, _ = _simulate_paths(market, copula, _Constant((0.0, 1.0)), cfg)
    rows = []
    for pt in pts:
        rep = _report(pt[0] * x1 + pt[1] * x2, ndef, market, cfg)
        if reference is None:
            rows.append(SweepRow(tuple(pt), rep))
        else:
            rows.append(SweepRow(tuple(pt), rep, *compare_reports(rep, reference)))
    return rows


def square_grid(center, half_width: float = 0.5, points: int = 3) -> np.ndarray:
    """points x points grid of constant strategies around ``center``."""
    c = np.asarray(center, float)
    off = np.linspace(-half_width, half_width, points)
    return np.array([[c[0] + u, c[1] + v] for u in off for v in off])
