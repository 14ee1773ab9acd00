"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant failure.
Numbers in CSV output carry 12 significant digits.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .core import CoreComputationError, ck_auction, is_core
from .market import DistributionSpec, MarketFormatError, generate_market, read_market, write_market
from .matching import max_weight_matching
from .plotting import Series
from .pointer_graph import (audit_path_inequalities, build_pointer_graph, check_expansion,
                            firm_distances, min_pointed_value, stream_pointer_graph)
from .simulator import (DEFAULT_SEED, DEFAULT_TRIALS, STAT_COLUMNS, KRule, SimConfig, TrialError,
                        aggregate, run_trials, salary_histogram, second_worst_regression,
                        solve_allocation, stats_as_rows, sweep_firms, worst_worker_regression)
from .tables import Table, emit_csv

DIGITS = 12
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
RULE_NAMES = {"firm": "firm_optimal", "worker": "worker_optimal"}

log = logging.getLogger("assigncore")


class UsageError(Exception):
    pass


class InvariantError(AssertionError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dist(text: str) -> DistributionSpec:
    try:
        return DistributionSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _market_flags(p, n_required=True):
    p.add_argument("--n", type=_positive_int, required=n_required, help="number of firms")
    p.add_argument("--k", type=_nonneg_int, default=0, help="extra workers (|W| = n + k)")
    p.add_argument("--dist", type=_dist, default=DistributionSpec.uniform(),
                   help="uniform | exp:RATE | weibull:SHAPE[:SCALE]")
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED)


def _output_flags(p, formats=("csv", "svg")):
    p.add_argument("--out", type=Path, help="output file (default: stdout)")
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--figure", type=Path,
                   help="also render the report figure to this file (.svg/.png/.pdf)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="assigncore", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="draw a random market and write it in the hex format")
    _market_flags(p)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("solve", help="optimal matching and an extreme core allocation")
    _market_flags(p, n_required=False)
    p.add_argument("--market", type=Path, help="read the market from a file instead of drawing it")
    p.add_argument("--csv", action="store_true", help="--market file holds decimal CSV rows (lossy)")
    p.add_argument("--allocation", choices=sorted(RULE_NAMES))
    p.add_argument("--eps", type=float, help="run the ascending auction with this increment")
    _output_flags(p)

    p = sub.add_parser("graph-check", help="pointer-graph expansion and payoff audits")
    _market_flags(p)
    p.add_argument("--samples", type=_positive_int, default=1000, help="sampled sets per size")
    p.add_argument("--sizes", type=_positive_int, nargs="+",
                   help="firm-set sizes (default: 1 5 25 floor(n/10) where valid)")
    p.add_argument("--pairs", type=_nonneg_int, default=100, help="random firm pairs for path lengths")
    p.add_argument("--stream", action="store_true",
                   help="build firm edges row by row without solving (large n; skips matching audits)")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("simulate", help="Monte-Carlo trials with per-trial metrics")
    p.add_argument("--n", type=_positive_int, nargs="+", required=True)
    p.add_argument("--k", type=_nonneg_int, default=0)
    p.add_argument("--dist", type=_dist, default=DistributionSpec.uniform())
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    p.add_argument("--trials", type=_positive_int, default=DEFAULT_TRIALS)
    p.add_argument("--allocation", choices=sorted(RULE_NAMES), default="firm")
    p.add_argument("--jobs", type=_positive_int, default=1)
    _output_flags(p)

    p = sub.add_parser("sweep-firms", help="workers' share with a fixed workforce and varying firms")
    p.add_argument("--workers", type=_positive_int, default=50)
    p.add_argument("--firms", type=_positive_int, nargs="+", default=list(range(20, 81, 5)))
    p.add_argument("--dist", type=_dist, default=DistributionSpec.uniform())
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    p.add_argument("--trials", type=_positive_int, default=DEFAULT_TRIALS)
    p.add_argument("--allocation", choices=sorted(RULE_NAMES), default="firm")
    p.add_argument("--jobs", type=_positive_int, default=1)
    _output_flags(p)

    p = sub.add_parser("histogram", help="salary histogram of one market")
    _market_flags(p)
    p.add_argument("--allocation", choices=sorted(RULE_NAMES), default="firm")
    p.add_argument("--bins", type=_positive_int, default=30)
    _output_flags(p)

    p = sub.add_parser("regress", help="sum of salaries against the worst worker's quality")
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--dist", type=_dist, default=DistributionSpec.uniform())
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--second-worst", action="store_true",
                   help="regress on the second-worst quality, worst pinned to --center +- --window")
    p.add_argument("--center", type=float, default=0.95)
    p.add_argument("--window", type=float, default=1e-2)
    _output_flags(p)
    return parser


def _write(args, data: bytes):
    out = getattr(args, "out", None)
    if out is None:
        sys.stdout.write(data.decode("utf-8"))
        sys.stdout.flush()
    else:
        out.write_bytes(data)


def _report(args, table: Table, series):
    if getattr(args, "format", "csv") == "svg":
        _write(args, plotting.emit_svg(series))
    else:
        _write(args, emit_csv(table, DIGITS))
    if getattr(args, "figure", None) is not None:
        plotting.save_figure(series, args.figure)


def cmd_generate(args):
    market = generate_market(args.n, args.k, args.dist, args.seed)
    _write(args, write_market(market).encode("utf-8"))


def cmd_solve(args):
    if args.eps is not None and args.allocation == "worker":
        raise UsageError("--eps runs the firm-proposing auction; it conflicts with --allocation worker")
    if args.eps is None and args.allocation is None:
        args.allocation = "firm"
    if args.market is not None:
        if args.n is not None:
            raise UsageError("--market and --n are mutually exclusive")
        market = read_market(args.market.read_text(encoding="utf-8"), csv=args.csv)
    else:
        if args.csv:
            raise UsageError("--csv only applies to --market files")
        if args.n is None:
            raise UsageError("one of --n or --market is required")
        market = generate_market(args.n, args.k, args.dist, args.seed)

    if args.eps is not None:
        if not args.eps > 0:
            raise UsageError("--eps must be positive")
        _, surplus = max_weight_matching(market)
        alloc = ck_auction(market, args.eps)
        violations = is_core(market, alloc, 1e-9, pair_tol=args.eps + 1e-12, surplus=surplus)
        label = f"auction(eps={args.eps!r})"
    else:
        try:
            alloc, surplus = solve_allocation(market, RULE_NAMES[args.allocation])
        except TrialError as exc:
            raise InvariantError(str(exc)) from exc
        violations = is_core(market, alloc, 1e-9, surplus=surplus)
        label = RULE_NAMES[args.allocation]
    if violations:
        raise InvariantError(f"{label} failed the core check: {violations[0]}")

    rows = [(f"f{f}", "firm", float(alloc.u[f])) for f in range(market.n)]
    rows += [(f"w{w}", "worker", float(alloc.v[w])) for w in range(market.n_workers)]
    rows.append(("surplus", "total", surplus))
    table = Table(("agent", "side", "payoff"), rows)
    log.info("%s: matching %s", label, alloc.matching.firm_to_worker.tolist())
    series = Series(np.arange(market.n_workers), alloc.v, "worker", "salary", label, kind="bar")
    _report(args, table, series)


def _default_sizes(n: int, k: int) -> list[int]:
    sizes = [s for s in (1, 5, 25) if s < n / 10 or k > n]
    if k <= n and n // 10 >= 1:
        sizes.append(n // 10)
    return sorted(set(sizes))


def cmd_graph_check(args):
    n, k = args.n, args.k
    sizes = args.sizes or _default_sizes(n, k)
    rows = []
    if args.stream:
        graph = stream_pointer_graph(n, k, args.dist, args.seed)
        market = None
    else:
        market = generate_market(n, k, args.dist, args.seed)
        matching, surplus = max_weight_matching(market)
        graph = build_pointer_graph(market, matching)

    if sizes:
        report = check_expansion(graph, sizes, args.samples, args.seed)
        rows += [("firm_expansion", r.size, r.samples, r.bound, r.min_neighbors, r.failures)
                 for r in report.rows]
    worker_sizes = [s for s in sizes if s < n / 10]
    if worker_sizes and k <= n:
        report = check_expansion(graph, worker_sizes, args.samples, args.seed, side="worker")
        rows += [("worker_pointing", r.size, r.samples, r.bound, r.min_neighbors, r.failures)
                 for r in report.rows]

    if args.dist.bounded:
        pv = min_pointed_value(graph, args.dist)
        rows.append(("min_pointed_value", "", graph.firm_edges.size, pv.threshold, pv.min_value, int(not pv.passes)))

    if market is not None:
        alloc, _ = solve_allocation(market, "firm_optimal")
        if args.dist.bounded:
            audit = audit_path_inequalities(graph, market, alloc)
            rows.append(("unemployed_edges", "", audit.unemployed_edges, 0.0,
                         audit.worst_unemployed_slack, audit.unemployed_violations))
            rows.append(("path_inequalities", "", audit.paths, 0.0,
                         audit.worst_path_slack, audit.path_violations))
        if args.pairs and n > 1:
            rng = np.random.default_rng(args.seed)
            longest, unreachable = 0, 0
            for _ in range(args.pairs):
                src, dst = rng.choice(n, size=2, replace=False)
                d = int(firm_distances(graph, int(src))[dst])
                if d < 0:
                    unreachable += 1
                else:
                    longest = max(longest, d)
            rows.append(("firm_path_distance", 2, args.pairs, 2.0 * math.log(n), longest, unreachable))

    table = Table(("check", "size", "samples", "bound", "observed", "failures"), rows)
    _write(args, emit_csv(table, DIGITS))


def cmd_simulate(args):
    config = SimConfig(tuple(args.n), KRule("fixed", args.k), args.dist,
                       RULE_NAMES[args.allocation], args.trials, args.seed)
    failures: list = []
    stats = run_trials(config, failures=failures, jobs=args.jobs)
    rows = [tuple(r[c] for c in STAT_COLUMNS) for r in stats_as_rows(stats)]
    agg = aggregate(stats)
    for a in agg:
        metrics = STAT_COLUMNS[3:]
        rows.append((a["n"], a["k"], "mean") + tuple(a[c] for c in metrics))
        rows.append((a["n"], a["k"], "se") + tuple(a[f"{c}_se"] for c in metrics))
    table = Table(STAT_COLUMNS, rows)
    series = [
        Series([a["n"] for a in agg], [a["mean_v"] for a in agg], "n", "mean salary",
               yerr=[a["mean_v_se"] for a in agg]),
        Series([a["n"] for a in agg], [a["max_v"] for a in agg], "n", "max salary",
               yerr=[a["max_v_se"] for a in agg]),
    ]
    _report(args, table, series)
    if failures:
        raise InvariantError(f"{len(failures)} trials failed; first: {failures[0]}")


def cmd_sweep_firms(args):
    rows = sweep_firms(args.workers, args.firms, args.dist, RULE_NAMES[args.allocation],
                       args.trials, args.seed, jobs=args.jobs)
    table = Table.from_dicts(rows)
    series = Series([r["firms"] for r in rows], [r["workers_share"] for r in rows],
                    "firms", "workers' share of surplus",
                    f"{args.workers} workers, {RULE_NAMES[args.allocation]}",
                    yerr=[r["workers_share_se"] for r in rows])
    _report(args, table, series)


def cmd_histogram(args):
    market = generate_market(args.n, args.k, args.dist, args.seed)
    alloc, _ = solve_allocation(market, RULE_NAMES[args.allocation])
    hist = salary_histogram(market, alloc, args.bins)
    rows = [(float(hist.edges[i]), float(hist.edges[i + 1]), int(c)) for i, c in enumerate(hist.counts)]
    table = Table(("bin_lo", "bin_hi", "count"), rows)
    series = Series(hist.edges, hist.counts, "salary", "workers",
                    f"n={args.n}, {args.dist.tag}", kind="bar")
    _report(args, table, series)


def cmd_regress(args):
    if args.second_worst:
        fit = second_worst_regression(args.n, args.trials, args.dist, args.seed,
                                      center=args.center, halfwidth=args.window)
    else:
        fit = worst_worker_regression(args.n, args.trials, args.dist, args.seed)
    rows = [(str(i), float(x), float(y)) for i, (x, y) in enumerate(zip(fit.x, fit.y))]
    rows += [("slope", fit.slope, None), ("intercept", fit.intercept, None),
             ("r2", fit.r2, None), ("defined", int(fit.defined), None)]
    table = Table(("row", "x", "y"), rows)
    series = Series(fit.x, fit.y, fit.label, "sum of salaries", kind="scatter",
                    fit=(fit.slope, fit.intercept) if fit.defined else None)
    _report(args, table, series)


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "graph-check": cmd_graph_check,
    "simulate": cmd_simulate,
    "sweep-firms": cmd_sweep_firms,
    "histogram": cmd_histogram,
    "regress": cmd_regress,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"assigncore: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"assigncore: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantError, TrialError, CoreComputationError) as exc:
        print(f"assigncore: internal invariant failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (MarketFormatError, ValueError, OSError) as exc:
        print(f"assigncore: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
