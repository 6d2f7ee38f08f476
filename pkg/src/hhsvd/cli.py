"""``hhsvd-bench``: time Householder multiplication or run the self-checks.

Exit codes: 0 success, 1 configuration error, 2 verification failure
(including algorithms disagreeing during a benchmark).
"""
from __future__ import annotations

import argparse
import sys

from .bench import ALGORITHMS, OPS, BenchConfig, ConfigError, ResultMismatchError, parse_dims, write_csv
from .bench import run_bench
from .verify import verify

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _list(choices):
    def parse(text):
        items = [x.strip() for x in text.split(",") if x.strip()]
        for x in items:
            if x not in choices:
                raise argparse.ArgumentTypeError(f"{x!r} not in {', '.join(choices)}")
        return items
    return parse


def _k(text):
    if text == "auto":
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("k must be a positive integer or 'auto'") from None
    if k < 1:
        raise argparse.ArgumentTypeError("k must be a positive integer or 'auto'")
    return k


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hhsvd-bench", description=__doc__.splitlines()[0])
    p.add_argument("--d", default="64", help="dimensions: comma list or start:step:count (default 64)")
    p.add_argument("--m", type=int, default=32, help="batch size (default 32)")
    p.add_argument("--k", type=_k, default="auto", help="block width for fasth, or 'auto'")
    p.add_argument("--algo", type=_list(ALGORITHMS), default=["fasth"],
                   help=f"comma list of {', '.join(ALGORITHMS)}")
    p.add_argument("--op", type=_list(OPS), default=["mul"], help=f"comma list of {', '.join(OPS)}")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.add_argument("--verify", action="store_true", help="run the verification suite instead of timing")
    p.add_argument("--param", default=None, help="with --verify: also validate this OSVD file")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        dims = parse_dims(args.d)
        config = BenchConfig(d=dims, m=args.m, k=args.k, algos=args.algo, ops=args.op,
                             reps=args.reps, seed=args.seed, threads=args.threads)
        config.validate()
    except ConfigError as e:
        print(f"hhsvd-bench: error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.verify:
        report = verify(dims=[d for d in dims if d <= 64] or [8], seed=args.seed, param_path=args.param)
        print(report.table(), file=sys.stderr if args.out is None else sys.stdout)
        if args.out is None:
            sys.stdout.write(report.csv())
        else:
            with open(args.out, "w", newline="") as fh:
                fh.write(report.csv())
        return EXIT_OK if report.ok else EXIT_VERIFY

    try:
        records = run_bench(config)
    except ResultMismatchError as e:
        print(f"hhsvd-bench: verification failure: {e}", file=sys.stderr)
        return EXIT_VERIFY
    if args.out is None:
        write_csv(records, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_csv(records, fh)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
