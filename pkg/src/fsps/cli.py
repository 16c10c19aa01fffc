"""Command-line entry: fsps <experiment> --config FILE [--out DIR] [--seed N]
[section.key=value ...].  Exit codes: 0 success, 1 verdict failure,
2 validation error, 3 numerical failure."""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, parse_config
from .poisson import BoundaryLeakError, PoissonMemoryError
from .runner import run_experiment
from .solvers import SolverError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fsps",
        description="Fractional scalar-field / Schrodinger-Poisson "
                    "numerical experiments")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="key=value config file")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("overrides", nargs="*", metavar="section.key=value",
                    help="config overrides")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, experiment=args.experiment,
                           overrides=args.overrides, out_dir=args.out,
                           seed=args.seed)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        manifest = run_experiment(cfg)
    except (SolverError, BoundaryLeakError, PoissonMemoryError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for name, ok in manifest.verdicts.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    print(f"manifest: {manifest.path}")
    return 0 if manifest.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
