"""Command line entry points.

Subcommands cover the full workflow: inspect a bid file, fit the
homogenization regressions, run the affiliation test end to end, replicate
it in a Monte Carlo study, and poke at the internals (mixture weights,
constraint listings).  Options can come from flags or from a YAML config
file; explicit flags win over the config.

Exit codes: 0 on success, 1 when a solver or numerical routine fails,
2 for usage, data format, or configuration problems.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, projection
from .affiliation import generate_constraints
from .errors import AffiltestError, DataFormatError, SolverError
from .estimate import SolverOptions
from .grid import GridSpec, count_cells
from .hetero import (fit_kernel, fit_lad, fit_ls, read_bid_csv,
                     residual_tuples, scatter_points)
from .inference import TestOptions, chibar_weights, run_test
from .simulate import (affiliated_2x2_dgp, affiliated_3x3_dgp, builtin_dgps,
                       independent_skewed_dgp, mc_study, uniform_dgp,
                       violating_2x2_dgp)

log = logging.getLogger("affiltest")

_CURVE_POINTS = 200


def _parse_floats(text):
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _load_config(path):
    import yaml

    with open(path) as handle:
        try:
            data = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise DataFormatError(f"{path}: invalid YAML ({exc})")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise DataFormatError(f"{path}: config must be a mapping of option names to values")
    return {str(key).replace("-", "_"): value for key, value in data.items()}


def _resolve_grid(args) -> GridSpec:
    bp = getattr(args, "breakpoints", None)
    if bp is not None:
        if isinstance(bp, str):
            bp = _parse_floats(bp)
        return GridSpec(tuple(float(b) for b in bp), args.n_bidders)
    return GridSpec.equispaced(args.k, args.n_bidders)


def _solver_options(args) -> SolverOptions:
    return SolverOptions(tol=args.tol, max_iter=args.max_iter,
                         epsilon_floor=args.epsilon_floor)


def _test_options(args) -> TestOptions:
    return TestOptions(constraint_mode=args.constraint_mode,
                       solver=_solver_options(args),
                       weight_draws=args.weight_draws,
                       seed=args.seed, size=args.size)


def _fit_all(x, y):
    """Fit the three homogenization curves, degrading gracefully."""
    fits = {"ls": fit_ls(x, y)}
    try:
        fits["lad"] = fit_lad(x, y)
    except SolverError as exc:
        log.warning("robust fit unavailable: %s", exc)
        fits["lad"] = None
    try:
        fits["kernel"] = fit_kernel(x, y)
    except (AffiltestError, ValueError) as exc:
        log.warning("kernel fit unavailable: %s", exc)
        fits["kernel"] = None
    return fits


def _write_scatter(outdir: Path, table) -> None:
    x, y, ids = scatter_points(table)
    with open(outdir / "scatter.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["auction_id", "log_estimate", "log_bid"])
        for aid, xv, yv in zip(ids, x, y):
            writer.writerow([aid, f"{xv:.10g}", f"{yv:.10g}"])


def _write_curves(outdir: Path, fits, x) -> None:
    grid = np.linspace(float(x.min()), float(x.max()), _CURVE_POINTS)
    cols = {"log_estimate": grid}
    for name in ("ls", "lad", "kernel"):
        fit = fits.get(name)
        cols[name] = fit.predict(grid) if fit is not None else None
    with open(outdir / "curves.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(cols.keys()))
        for i in range(_CURVE_POINTS):
            writer.writerow([f"{cols[name][i]:.10g}" if cols[name] is not None else ""
                             for name in cols])


def _write_residuals(outdir: Path, table, resid) -> None:
    n = resid.shape[1]
    with open(outdir / "residuals.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["auction_id"] + [f"u{i + 1}" for i in range(n)])
        for record, row in zip(table.records, resid):
            writer.writerow([record.auction_id] + [f"{v:.10g}" for v in row])


def _cmd_summary(args) -> int:
    table = read_bid_csv(args.data, args.n_bidders)
    estimates = np.array([r.engineer_estimate for r in table.records])
    bids = np.array([b for r in table.records for b in r.bids])
    print(f"rows read:        {table.total_rows}")
    print(f"auctions kept:    {table.n_auctions} (exactly {args.n_bidders} bids each)")
    print(f"auctions dropped: {table.dropped_auctions}")
    print(f"estimate range:   [{estimates.min():.2f}, {estimates.max():.2f}]")
    print(f"bid range:        [{bids.min():.2f}, {bids.max():.2f}]")
    return 0


def _cmd_fit_hetero(args) -> int:
    table = read_bid_csv(args.data, args.n_bidders)
    log.info("read %d auctions (%d dropped)", table.n_auctions, table.dropped_auctions)
    x, y, _ = scatter_points(table)
    fits = _fit_all(x, y)
    fit = fits[args.method]
    if fit is None:
        raise SolverError(f"{args.method} fit unavailable for this sample")
    resid = residual_tuples(fit, table)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_scatter(outdir, table)
    _write_curves(outdir, fits, x)
    _write_residuals(outdir, table, resid)

    for name in ("ls", "lad"):
        f = fits[name]
        if f is None:
            continue
        line = f"{name}: log(bid) = {f.intercept:.6f} + {f.slope:.6f} * log(estimate)"
        if f.r_squared is not None:
            line += f"  (r^2 = {f.r_squared:.4f})"
        print(line)
    if fits["kernel"] is not None:
        print(f"kernel: bandwidth = {fits['kernel'].bandwidth:.6f}")
    print(f"wrote scatter.csv, curves.csv, residuals.csv to {outdir}")
    return 0


def _cmd_test(args) -> int:
    table = read_bid_csv(args.data, args.n_bidders)
    log.info("read %d auctions (%d dropped)", table.n_auctions, table.dropped_auctions)
    x, y, _ = scatter_points(table)
    fits = _fit_all(x, y)
    fit = fits[args.method]
    if fit is None:
        raise SolverError(f"{args.method} fit unavailable for this sample")
    resid = residual_tuples(fit, table)

    grid = _resolve_grid(args)
    counts = count_cells(grid, resid)
    options = _test_options(args)
    log.info("grid k=%d, n_bidders=%d, constraint mode %s, seed %d",
             grid.k, grid.n_bidders, options.constraint_mode, options.seed)
    report = run_test(counts, options)
    log.info("J=%d, LR=%.6g, decision: %s", report.j, report.lr_stat, report.decision)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report.to_json() + "\n")
    (outdir / "summary.txt").write_text(report.summary_text() + "\n")
    _write_scatter(outdir, table)
    _write_curves(outdir, fits, x)
    _write_residuals(outdir, table, resid)

    print(report.summary_text())
    print(f"wrote report.json, summary.txt, scatter.csv, curves.csv, residuals.csv to {outdir}")
    return 0


def _make_dgp(name: str, param):
    factories = {
        "uniform": (uniform_dgp, None),
        "independent-skewed": (independent_skewed_dgp, None),
        "affiliated-2x2": (affiliated_2x2_dgp, "rho"),
        "violating-2x2": (violating_2x2_dgp, "margin"),
        "affiliated-3x3": (affiliated_3x3_dgp, "strength"),
    }
    if name not in factories:
        raise DataFormatError(f"unknown dgp {name!r}; choose from {sorted(factories)}")
    factory, param_name = factories[name]
    if param is None:
        return factory()
    if param_name is None:
        log.warning("dgp %s takes no parameter; ignoring --dgp-param", name)
        return factory()
    return factory(param)


def _cmd_simulate(args) -> int:
    dgp = _make_dgp(args.dgp, args.dgp_param)
    options = TestOptions(constraint_mode=args.constraint_mode,
                          solver=SolverOptions(tol=args.tol, max_iter=args.max_iter,
                                               epsilon_floor=args.epsilon_floor),
                          weight_draws=args.weight_draws, seed=args.seed)
    log.info("dgp %s, T=%d, %d replications, seed %d, n_jobs=%d",
             dgp.label, args.t, args.replications, args.seed, args.n_jobs)
    result = mc_study(dgp, args.t, args.replications, seed=args.seed,
                      sizes=args.sizes, options=options, n_jobs=args.n_jobs)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "mc.json").write_text(result.to_json() + "\n")
    result.write_csv(outdir / "mc.csv")

    print(f"dgp: {result.dgp}  T={result.n_auctions}  replications={result.replications}")
    print(f"mean LR statistic: {result.mean_lr:.4f}")
    for rule in ("pvalue", "kp_lower", "kp_upper"):
        rates = "  ".join(f"{size}: {rate:.3f}" for size, rate in result.rates[rule].items())
        print(f"rejection rate [{rule}]  {rates}")
    print(f"wrote mc.json, mc.csv to {outdir}")
    return 0


def _cmd_weights(args) -> int:
    pi0 = np.loadtxt(args.pi0, delimiter=",", ndmin=2)
    weights = chibar_weights(pi0, draws=args.draws, seed=args.seed)
    for j, value in enumerate(weights.values):
        print(f"weight[{j}] = {value:.6f}")
    if weights.ridge:
        log.warning("covariance was regularized before factorization")
    if args.output:
        payload = {"j": pi0.shape[0], "weights": list(weights.values),
                   "draws": weights.draws, "seed": weights.seed,
                   "ridged": bool(weights.ridge)}
        Path(args.output).write_text(json.dumps(payload, indent=2) + "\n")
        print(f"wrote {args.output}")
    return 0


def _cmd_constraints(args) -> int:
    cset = generate_constraints(args.k, args.n_bidders, mode=args.constraint_mode,
                                symmetric=not args.no_symmetric)
    kind = "orbit" if cset.symmetric else "cell"
    print(f"k={cset.k} n_bidders={cset.n_bidders} mode={cset.mode} "
          f"({kind} space): {cset.j} constraints")
    for constraint in cset.constraints:
        print("  " + constraint.describe())
    return 0


def _add_solver_flags(sp) -> None:
    sp.add_argument("--tol", type=float, default=1e-8,
                    help="solver convergence tolerance (default 1e-8)")
    sp.add_argument("--max-iter", type=int, default=500,
                    help="solver iteration cap (default 500)")
    sp.add_argument("--epsilon-floor", type=float, default=1e-12,
                    help="lower bound on fitted cell masses (default 1e-12)")


def _add_grid_flags(sp) -> None:
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--k", type=int, default=2,
                       help="number of equal-width bins per coordinate (default 2)")
    group.add_argument("--breakpoints", type=_parse_floats, default=None,
                       help="explicit breakpoints, e.g. 0,0.3,1 (overrides --k)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="affiltest",
        description="Test affiliation of bidders' private signals from first-price auction bids.")
    parser.add_argument("--version", action="version", version=f"affiltest {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="YAML file with option defaults (flags override)")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors")

    sub = parser.add_subparsers(dest="command", required=True)
    sub_map = {}

    sp = sub.add_parser("summary", parents=[common],
                        help="describe a bid file without fitting anything")
    sp.add_argument("data", help="bid CSV (auction_id, engineer_estimate, bid)")
    sp.add_argument("--n-bidders", type=int, default=3)
    sp.set_defaults(handler=_cmd_summary)
    sub_map["summary"] = sp

    sp = sub.add_parser("fit-hetero", parents=[common],
                        help="fit the bid homogenization regressions")
    sp.add_argument("data", help="bid CSV (auction_id, engineer_estimate, bid)")
    sp.add_argument("--n-bidders", type=int, default=3)
    sp.add_argument("--method", choices=("ls", "lad", "kernel"), default="ls",
                    help="fit used for the residuals file (default ls)")
    sp.add_argument("--outdir", default=".")
    sp.set_defaults(handler=_cmd_fit_hetero)
    sub_map["fit-hetero"] = sp

    sp = sub.add_parser("test-affiliation", parents=[common],
                        help="run the affiliation test end to end on bid data")
    sp.add_argument("data", help="bid CSV (auction_id, engineer_estimate, bid)")
    sp.add_argument("--n-bidders", type=int, default=3)
    sp.add_argument("--method", choices=("ls", "lad", "kernel"), default="ls")
    _add_grid_flags(sp)
    sp.add_argument("--constraint-mode", choices=("adjacent", "full"), default="adjacent")
    sp.add_argument("--weight-draws", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", type=float, default=0.05,
                    help="nominal level for the bound decision (default 0.05)")
    _add_solver_flags(sp)
    sp.add_argument("--outdir", default=".")
    sp.set_defaults(handler=_cmd_test)
    sub_map["test-affiliation"] = sp

    sp = sub.add_parser("simulate", parents=[common],
                        help="Monte Carlo study of the test on a built-in dgp")
    sp.add_argument("--dgp", default="uniform",
                    help=f"one of {sorted(builtin_dgps())}")
    sp.add_argument("--dgp-param", type=float, default=None,
                    help="dgp parameter (rho / margin / strength) where applicable")
    sp.add_argument("--t", type=int, default=500, help="auctions per replication")
    sp.add_argument("--replications", type=int, default=100)
    sp.add_argument("--sizes", type=_parse_floats, default=(0.10, 0.05, 0.01))
    sp.add_argument("--constraint-mode", choices=("adjacent", "full"), default="adjacent")
    sp.add_argument("--weight-draws", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-jobs", type=int, default=1)
    _add_solver_flags(sp)
    sp.add_argument("--outdir", default=".")
    sp.set_defaults(handler=_cmd_simulate)
    sub_map["simulate"] = sp

    sp = sub.add_parser("weights", parents=[common],
                        help="mixture weights for a covariance given as CSV")
    sp.add_argument("pi0", help="square covariance matrix, comma separated")
    sp.add_argument("--draws", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", default=None, help="optional JSON output path")
    sp.set_defaults(handler=_cmd_weights)
    sub_map["weights"] = sp

    sp = sub.add_parser("constraints", parents=[common],
                        help="list the inequality constraints for a grid")
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--n-bidders", type=int, default=2)
    sp.add_argument("--constraint-mode", choices=("adjacent", "full"), default="adjacent")
    sp.add_argument("--no-symmetric", action="store_true",
                    help="work in raw cell space instead of orbit space")
    sp.set_defaults(handler=_cmd_constraints)
    sub_map["constraints"] = sp

    return parser, sub_map


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, sub_map = _build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    pre_args, _ = pre.parse_known_args(argv)

    try:
        if pre_args.config:
            config = _load_config(pre_args.config)
            recognized = set()
            for sp in sub_map.values():
                dests = {action.dest for action in sp._actions}
                recognized |= dests
                sp.set_defaults(**{k: v for k, v in config.items() if k in dests})
            unknown = set(config) - recognized
            if unknown:
                raise DataFormatError(f"unknown config keys: {', '.join(sorted(unknown))}")

        args = parser.parse_args(argv)
        level = logging.WARNING if args.quiet else logging.INFO
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        logging.getLogger().setLevel(level)  # basicConfig is a no-op when re-entered
        log.info("affiltest %s (projection kernel: %s)", __version__,
                 projection.IMPLEMENTATION)
        if pre_args.config:
            log.info("config: %s", pre_args.config)
        return args.handler(args)
    except (DataFormatError, FileNotFoundError) as exc:
        logging.getLogger("affiltest").error("%s", exc)
        return 2
    except ValueError as exc:
        logging.getLogger("affiltest").error("%s", exc)
        return 2
    except AffiltestError as exc:
        logging.getLogger("affiltest").error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
