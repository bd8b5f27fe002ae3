"""Command line entry point: ``preeq run | sweep | oracle-check``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import checks
from .harness import SWEEP_VARS, SweepTable, aggregate, run_trials, sweep
from .sysmodel import load_config


def _write(table: SweepTable, out):
    text = table.to_csv()
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _schemes(text):
    return [s.strip() for s in text.split(",") if s.strip()] if text else None


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    schemes = _schemes(args.schemes) or [config.scheme]
    metrics = run_trials(config, args.trials, schemes)
    _write(SweepTable(aggregate(metrics, "none", "", config.seed)), args.out)
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    table = sweep(config, args.var, values, args.trials, _schemes(args.schemes))
    _write(table, args.out)
    return 0


def cmd_oracle_check(args) -> int:
    numbers = range(1, 13) if args.all else checks.FAST
    failed = 0
    for i in numbers:
        result = checks.CRITERIA[i]()
        print(result.line(), flush=True)
        failed += not result.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="preeq", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="Monte Carlo run at one operating point")
    r.add_argument("--config", required=True)
    r.add_argument("--trials", type=int, default=100)
    r.add_argument("--seed", type=int)
    r.add_argument("--schemes", help="comma separated, e.g. proposed,baseline3")
    r.add_argument("--out", help="CSV path (default stdout)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one parameter")
    s.add_argument("--config", required=True)
    s.add_argument("--var", required=True, choices=SWEEP_VARS)
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--schemes", help="comma separated, e.g. proposed,baseline1")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle-check", help="run the oracle and invariant checks")
    o.add_argument("--all", action="store_true", help="include the Monte Carlo trend checks (minutes)")
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
