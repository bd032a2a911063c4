"""Flat ``key = value`` run configuration.

Keys carry a dotted section prefix (``copula.a1 = 0.01``).  Pairs are written
``0.02, 0.02``; intervals ``lo:hi`` with ``inf`` allowed, or ``none``.
Lines starting with ``#`` are comments.  See CONFIG.md for the full key list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from credit_bsde.copula import Alpha1Formula, GumbelParams
from credit_bsde.market import Interval, MarketParams
from credit_bsde.verify import SimConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class RunConfig:
    copula: GumbelParams = field(default_factory=lambda: GumbelParams(0.1, 0.1, 2.0))
    market: MarketParams = field(default_factory=lambda: MarketParams(gamma=(-0.5, -0.5)))
    steps: int = 200
    mode: Alpha1Formula = Alpha1Formula.DERIVED
    sim: SimConfig = field(default_factory=SimConfig)
    out_dir: str = "out"

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 2:
            raise ConfigError(f"grid.steps must be an integer >= 2, got {self.steps}")
        object.__setattr__(self, "mode", Alpha1Formula.parse(self.mode))

    def with_overrides(self, out_dir=None, steps=None, seed=None, mode=None) -> "RunConfig":
        cfg = self
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        if steps is not None:
            cfg = replace(cfg, steps=steps)
        if seed is not None:
            cfg = replace(cfg, sim=_build("sim.seed", lambda: replace(cfg.sim, seed=seed)))
        if mode is not None:
            cfg = replace(cfg, mode=_build("alpha1_formula", lambda: Alpha1Formula.parse(mode)))
        return cfg

    def sim_config(self) -> SimConfig:
        """Simulation settings on the same time grid as the solve."""
        return replace(self.sim, grid_steps=self.steps)


def _build(key, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        # field validators already name the dotted key
        raise ConfigError(msg if msg.startswith(key) else f"{key}: {msg}") from None


def _num(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if math.isnan(v):
        raise ConfigError(f"{key}: NaN is not allowed")
    return v


def _int(key, text):
    v = _num(key, text)
    if v != int(v):
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(v)


def _pair(key, text):
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected two comma-separated numbers, got {text!r}")
    return (_num(key, parts[0]), _num(key, parts[1]))


def _bool(key, text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def _interval(key, text):
    if text.strip().lower() == "none":
        return None
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected lo:hi or none, got {text!r}")
    lo, hi = _num(key, parts[0]), _num(key, parts[1])
    return _build(key, lambda: Interval(lo, hi))


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_interval(c: Optional[Interval]) -> str:
    return "none" if c is None else f"{_fmt(c.lo)}:{_fmt(c.hi)}"


_KEYS = (
    "copula.a1", "copula.a2", "copula.beta",
    "market.b0", "market.sigma0", "market.rho", "market.b1", "market.sigma1",
    "market.gamma", "market.p", "market.T",
    "market.constraint_pre1", "market.constraint_pre2", "market.constraint_post",
    "grid.steps", "alpha1_formula",
    "sim.paths", "sim.seed", "sim.substeps", "sim.antithetic",
    "output.dir",
)


def parse_config(text: str) -> RunConfig:
    """Parse config text; unspecified keys keep their defaults."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    base = RunConfig()
    c, m, s = base.copula, base.market, base.sim

    def get(key, conv, default):
        return conv(key, raw[key]) if key in raw else default

    a1 = get("copula.a1", _num, c.a1)
    a2 = get("copula.a2", _num, c.a2)
    beta = get("copula.beta", _num, c.beta)
    copula = _build("copula", lambda: GumbelParams(a1, a2, beta))

    pre1 = get("market.constraint_pre1", _interval, None if m.constraint_pre is None else m.constraint_pre[0])
    pre2 = get("market.constraint_pre2", _interval, None if m.constraint_pre is None else m.constraint_pre[1])
    if (pre1 is None) != (pre2 is None):
        raise ConfigError("market.constraint_pre1/2: set both or neither")
    market = _build("market", lambda: MarketParams(
        b0=get("market.b0", _pair, m.b0),
        sigma0_vol=get("market.sigma0", _pair, m.sigma0_vol),
        rho=get("market.rho", _num, m.rho),
        b1=get("market.b1", _pair, m.b1),
        sigma1_vol=get("market.sigma1", _pair, m.sigma1_vol),
        gamma=get("market.gamma", _pair, m.gamma),
        p=get("market.p", _num, m.p),
        T=get("market.T", _num, m.T),
        constraint_pre=None if pre1 is None else (pre1, pre2),
        constraint_post=get("market.constraint_post", _interval, m.constraint_post),
    ))
    sim = _build("sim", lambda: SimConfig(
        paths=get("sim.paths", _int, s.paths),
        seed=get("sim.seed", _int, s.seed),
        substeps=get("sim.substeps", _int, s.substeps),
        antithetic=get("sim.antithetic", _bool, s.antithetic),
    ))
    steps = get("grid.steps", _int, base.steps)
    mode = _build("alpha1_formula", lambda: Alpha1Formula.parse(raw.get("alpha1_formula", base.mode.value)))
    return RunConfig(copula, market, steps, mode, sim, raw.get("output.dir", base.out_dir))


def serialize_config(cfg: RunConfig) -> str:
    c, m, s = cfg.copula, cfg.market, cfg.sim
    pre = m.constraint_pre or (None, None)
    lines = [
        f"copula.a1 = {_fmt(c.a1)}",
        f"copula.a2 = {_fmt(c.a2)}",
        f"copula.beta = {_fmt(c.beta)}",
        f"market.b0 = {_fmt(m.b0[0])}, {_fmt(m.b0[1])}",
        f"market.sigma0 = {_fmt(m.sigma0_vol[0])}, {_fmt(m.sigma0_vol[1])}",
        f"market.rho = {_fmt(m.rho)}",
        f"market.b1 = {_fmt(m.b1[0])}, {_fmt(m.b1[1])}",
        f"market.sigma1 = {_fmt(m.sigma1_vol[0])}, {_fmt(m.sigma1_vol[1])}",
        f"market.gamma = {_fmt(m.gamma[0])}, {_fmt(m.gamma[1])}",
        f"market.p = {_fmt(m.p)}",
        f"market.T = {_fmt(m.T)}",
        f"market.constraint_pre1 = {_fmt_interval(pre[0])}",
        f"market.constraint_pre2 = {_fmt_interval(pre[1])}",
        f"market.constraint_post = {_fmt_interval(m.constraint_post)}",
        f"grid.steps = {cfg.steps}",
        f"alpha1_formula = {cfg.mode.value}",
        f"sim.paths = {s.paths}",
        f"sim.seed = {s.seed}",
        f"sim.substeps = {s.substeps}",
        f"sim.antithetic = {'true' if s.antithetic else 'false'}",
        f"output.dir = {cfg.out_dir}",
    ]
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
