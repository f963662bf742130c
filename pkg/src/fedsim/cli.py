"""Command-line entry point: ``fedsim run | compare | solve-betas | timing``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .baseline import solve_betas
from .config import parse_config
from .errors import ConfigError, FedSimError, IngestionError
from .metrics import compare_runs, plot_blocks, read_csv, run_label

EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _fraction_list(text: str) -> list[Fraction]:
    try:
        return [Fraction(x.strip()) for x in text.split(",") if x.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers or fractions, got {text!r}")


def _cmd_run(args) -> int:
    from .experiment import run_experiment  # numpy-heavy, only needed here

    cfg = parse_config(args.config, seed=args.seed)
    path = run_experiment(cfg, out=args.out, trace=args.trace)
    if args.plot_data:
        records = read_csv(path)
        Path(args.plot_data).write_text(plot_blocks([(run_label(records, path), records)]))
    return 0


def _cmd_compare(args) -> int:
    if len(args.csv) < 2:
        raise ConfigError(f"compare needs at least two metrics files, got {len(args.csv)}")
    report = compare_runs(args.csv, args.out, target=args.target)
    if args.plot_data:
        runs = [(run_label(recs, p), recs) for p, recs in ((p, read_csv(p)) for p in args.csv)]
        Path(args.plot_data).write_text(plot_blocks(runs))
    summary = report.split("## accuracy by relative time")[0].rstrip()
    print(summary)
    return 0


def _cmd_solve_betas(args) -> int:
    alphas = args.alphas
    schedule = args.schedule or list(range(1, len(alphas) + 1))
    if sorted(schedule) != list(range(1, len(alphas) + 1)):
        raise ConfigError(f"--schedule must be a permutation of 1..{len(alphas)}, got {schedule}")
    result = solve_betas(alphas, [c - 1 for c in schedule])
    print("iteration\tclient\tbeta\tbeta_exact")
    for k, (client, beta) in enumerate(zip(result.schedule, result.betas), start=1):
        print(f"{k}\t{client + 1}\t{float(beta):.12g}\t{beta}")
    return 0


def _cmd_timing(args) -> int:
    from .timing import afl_trunk_time_bounds, sfl_round_time

    m, tau, a, up, down = args.clients, args.compute, args.slowdown, args.upload, args.download
    if min(m, tau, up, down) <= 0 or a < 1:
        raise ConfigError("clients, compute, upload and download must be positive; slowdown >= 1")
    a = Fraction(a).limit_denominator()
    if args.mode == "sfl":
        value = sfl_round_time(m, a * tau, up, down)
        print(f"sfl_round_time\t{_num(value)}")
    else:
        lower, upper = afl_trunk_time_bounds(m, tau, a, up, down)
        print(f"afl_trunk_lower\t{_num(lower)}")
        print(f"afl_trunk_upper\t{_num(upper)}")
        print(f"afl_aggregation_interval\t{up + down}")
    return 0


def _num(x) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{float(x):g}"


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedsim", description="Discrete-event simulator for synchronous and asynchronous FL.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, help="overrides the config seed and $FEDSIM_SEED")
    run.add_argument("--out", help="metrics CSV path (default: the config's output key)")
    run.add_argument("--trace", help="write the tab-separated event trace here")
    run.add_argument("--plot-data", help="write gnuplot data blocks here")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="compare metrics CSV files")
    cmp_.add_argument("csv", nargs="+")
    cmp_.add_argument("--out", required=True, help="report path")
    cmp_.add_argument("--target", type=float, help="target accuracy (default: lowest final accuracy)")
    cmp_.add_argument("--plot-data", help="write gnuplot data blocks here")
    cmp_.set_defaults(func=_cmd_compare)

    sb = sub.add_parser("solve-betas", help="blend weights that make one async trunk equal FedAvg")
    sb.add_argument("--alphas", required=True, type=_fraction_list, help="e.g. 0.2,0.3,0.5 or 1/3,1/3,1/3")
    sb.add_argument("--schedule", type=_int_list, help="1-based client order, e.g. 3,1,2 (default 1..M)")
    sb.set_defaults(func=_cmd_solve_betas)

    tm = sub.add_parser("timing", help="completion-time formulas")
    tm.add_argument("--mode", choices=("sfl", "afl"), required=True)
    tm.add_argument("--clients", type=int, required=True)
    tm.add_argument("--compute", type=int, required=True, help="fastest client's compute ticks")
    tm.add_argument("--slowdown", type=float, default=1.0, help="slowest / fastest compute ratio")
    tm.add_argument("--upload", type=int, required=True)
    tm.add_argument("--download", type=int, required=True)
    tm.set_defaults(func=_cmd_timing)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, IngestionError) as exc:
        print(f"fedsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FedSimError as exc:
        print(f"fedsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"fedsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
