"""Command-line entry point: ``credit-bsde {solve,table,figure,simulate,check}``.

Exit codes: 0 success, 1 invalid input or unwritable output, 2 solver or
simulation failure, 3 failed checks.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

import numpy as np

from credit_bsde import copula as cop
from credit_bsde.checks import FAIL, run_checks
from credit_bsde.config import ConfigError, RunConfig, load_config
from credit_bsde.copula import GumbelParams
from credit_bsde.errors import DomainError, SimulationError, SolverError
from credit_bsde.market import merton_strategy
from credit_bsde.recursion import TimeGrid, solve_cascade, strategy_path, value_function
from credit_bsde.reference import GAMMAS, TABLES
from credit_bsde.verify import constant_strategy_sweep, simulate_expected_utility, square_grid

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3


class OutputError(Exception):
    """Output directory cannot be written."""


def fmt(x) -> str:
    """9 significant digits, locale independent."""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".9g")


def _prepare(out_dir) -> Path:
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {path}: {exc.strerror}") from None
    if not os.access(path, os.W_OK | os.X_OK):
        raise OutputError(f"output directory {path} is not writable")
    return path


def write_csv(path: Path, header, rows) -> Path:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    return path


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (SolverError, SimulationError, ArithmeticError) as exc:
        raise SolverError(f"{name} failed: {exc}") from exc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> list:
    out = _prepare(cfg.out_dir)
    cas = _stage("cascade solve", solve_cascade, cfg.market, cfg.copula, cfg.steps, cfg.mode)
    t = cas.grid.nodes
    return [
        write_csv(out / "y0.csv", ["t", "y0"], zip(t, cas.y0.y)),
        write_csv(out / "pi0.csv", ["t", "pi1", "pi2"], zip(t, cas.y0.pi[:, 0], cas.y0.pi[:, 1])),
        write_csv(out / "diagonal.csv", ["t", "d1", "d2"], zip(t, cas.diag.d1, cas.diag.d2)),
    ]


def table_rows(cfg: RunConfig, table_id: int, compare: bool = False):
    if table_id not in TABLES:
        raise ValueError(f"table id must be 1 or 2, got {table_id}")
    header = ["block", "gamma", "pi1", "pi2", "survival_corr", "merton1", "merton2"]
    if compare:
        header += ["ref_pi1", "ref_pi2", "dev_pi1", "dev_pi2"]
    rows = []
    for blk in TABLES[table_id]:
        c = GumbelParams(blk.a1, blk.a2, blk.beta)
        base = cfg.market.replace(rho=blk.rho)
        mert = merton_strategy(base)
        rs = cop.survival_correlation(c, base.T)
        for k, g in enumerate(GAMMAS):
            cas = _stage(f"table {table_id} block '{blk.label}' gamma={g}",
                         solve_cascade, base.replace(gamma=(g, g)), c, cfg.steps, cfg.mode)
            pi = cas.pi0
            row = [blk.label, g, pi[0], pi[1], rs, mert[0], mert[1]]
            if compare:
                r1, r2 = blk.pi1[k], blk.pi2[k]
                row += [r1, r2, pi[0] - r1, pi[1] - r2]
            rows.append(row)
    return header, rows


def cmd_table(cfg: RunConfig, table_id: int, compare: bool = False) -> Path:
    out = _prepare(cfg.out_dir)
    header, rows = table_rows(cfg, table_id, compare)
    return write_csv(out / f"table{table_id}.csv", header, rows)


FIG1_INTENSITIES = (0.01, 0.05, 0.1, 0.3)
FIG1_GAMMAS = tuple(np.round(np.linspace(-0.5, 1.0, 16), 10))
FIG2_GAMMAS = (-0.5, 0.0, 0.5, 1.0)
FIG3_GAMMAS = (-0.5, -0.1)
FIG3_TAU = 0.6


def figure_rows(cfg: RunConfig, figure_id: int):
    m = cfg.market
    rows = []
    if figure_id == 1:
        base = m.replace(rho=0.0)
        mert = merton_strategy(base)
        for a in FIG1_INTENSITIES:
            c = GumbelParams(a, a, 2.0)
            for g in FIG1_GAMMAS:
                cas = _stage(f"figure 1 a={a} gamma={g}", solve_cascade, base.replace(gamma=(g, g)), c, cfg.steps, cfg.mode)
                rows.append([f"a={fmt(a)}", g, cas.pi0[0]])
        for g in FIG1_GAMMAS:
            rows.append(["merton", g, mert[0]])
    elif figure_id == 2:
        c = GumbelParams(0.01, 0.01, 2.0)
        for g in FIG2_GAMMAS:
            cas = _stage(f"figure 2 gamma={g}", solve_cascade, m.replace(gamma=(g, g)), c, cfg.steps, cfg.mode)
            for t in cas.grid.nodes:
                rows.append([f"gamma={fmt(g)}", t, value_function(cas.y0, t, 0.0)])
    elif figure_id == 3:
        c = GumbelParams(0.01, 0.01, 2.0)
        grid = TimeGrid(0.0, m.T, cfg.steps)
        for g in FIG3_GAMMAS:
            mk = m.replace(gamma=(g, g))
            cas = _stage(f"figure 3 gamma={g}", solve_cascade, mk, c, cfg.steps, cfg.mode)
            path = _stage(f"figure 3 gamma={g} strategy path", strategy_path, mk, c, grid,
                          (1, FIG3_TAU), cfg.mode, cas.y0)
            for t, pi in zip(path.pre_times, path.pre_pi):
                rows.append([f"gamma={fmt(g)} pi1 pre", t, pi[0]])
            for t, pi in zip(path.pre_times, path.pre_pi):
                rows.append([f"gamma={fmt(g)} pi2 pre", t, pi[1]])
            for t, pi in zip(path.post_times, path.post_pi):
                rows.append([f"gamma={fmt(g)} pi2 post", t, pi])
    else:
        raise ValueError(f"figure id must be 1, 2 or 3, got {figure_id}")
    return ["series", "x", "y"], rows


def cmd_figure(cfg: RunConfig, figure_id: int) -> Path:
    out = _prepare(cfg.out_dir)
    header, rows = figure_rows(cfg, figure_id)
    return write_csv(out / f"figure{figure_id}.csv", header, rows)


def cmd_simulate(cfg: RunConfig) -> list:
    out = _prepare(cfg.out_dir)
    m, c = cfg.market, cfg.copula
    cas = _stage("cascade solve", solve_cascade, m, c, cfg.steps, cfg.mode)
    sim = cfg.sim_config()
    rep = _stage("simulation", simulate_expected_utility, m, c, cas.strategy(), sim)
    target = -math.exp(m.p * cas.y0.y[0])
    summary = [
        ["mean_utility", rep.mean], ["std_error", rep.std_error], ["target", target],
        ["z_score", (rep.mean - target) / rep.std_error if rep.std_error > 0 else 0.0],
        ["certainty_equivalent", rep.certainty_equivalent],
        ["paths", rep.paths], ["failures", rep.failures],
        ["no_default", rep.counts[0]], ["one_default", rep.counts[1]], ["two_defaults", rep.counts[2]],
    ]
    sweep = _stage("constant-strategy sweep", constant_strategy_sweep, m, c, square_grid(cas.pi0), sim, rep)
    rows = [[*r.pi, r.report.mean, r.report.std_error, r.diff, r.pooled_se, r.paired_se,
             "yes" if r.dominated() else "no"] for r in sweep]
    return [
        write_csv(out / "simulate.csv", ["quantity", "value"], summary),
        write_csv(out / "sweep.csv", ["pi1", "pi2", "mean", "std_error", "diff", "pooled_se",
                                      "paired_se", "dominated"], rows),
    ]


def cmd_check(cfg: RunConfig, stream=sys.stdout) -> bool:
    results = _stage("check battery", run_checks, cfg)
    for r in results:
        print(r.line(), file=stream)
    failed = [r for r in results if r.status == FAIL]
    print(f"{len(results) - len(failed)}/{len(results)} checks without failure", file=stream)
    return not failed


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--grid-steps", type=int, help="RK4 steps on [0, T] (overrides grid.steps)")
    common.add_argument("--seed", type=int, help="simulation seed (overrides sim.seed)")
    common.add_argument("--mode", choices=("derived", "paper"),
                        help="closed form used for alpha1 (overrides alpha1_formula)")
    parser = argparse.ArgumentParser(prog="credit-bsde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="write y0.csv, pi0.csv, diagonal.csv")
    p = sub.add_parser("table", parents=[common], help="strategy table at t = 0")
    p.add_argument("--id", type=int, choices=(1, 2), required=True)
    p.add_argument("--compare", action="store_true", help="append published values and deviations")
    p = sub.add_parser("figure", parents=[common], help="curve data in series,x,y format")
    p.add_argument("--id", type=int, choices=(1, 2, 3), required=True)
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo value check and constant sweep")
    sub.add_parser("check", parents=[common], help="run the invariant battery")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(out_dir=args.out, steps=args.grid_steps, seed=args.seed, mode=args.mode)
        if args.command == "solve":
            paths = cmd_solve(cfg)
        elif args.command == "table":
            paths = [cmd_table(cfg, args.id, args.compare)]
        elif args.command == "figure":
            paths = [cmd_figure(cfg, args.id)]
        elif args.command == "simulate":
            paths = cmd_simulate(cfg)
        else:
            return EXIT_OK if cmd_check(cfg) else EXIT_CHECK
    except (ConfigError, DomainError, OutputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, SimulationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
