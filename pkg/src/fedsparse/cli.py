"""Command-line entry point: `simulate --config <path> [--out DIR] [--jobs N] [--dry-run]`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import parse_config
from .errors import ConfigError
from .runner import run_experiment


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Run sparse federated training experiments from a config file.")
    parser.add_argument("--config", required=True, help="path to a TOML experiment config")
    parser.add_argument("--out", default=None, help="output directory "
                        "(default: the config's experiment.output_dir)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="max concurrent runs (default 1)")
    parser.add_argument("--dry-run", action="store_true",
                        help="validate and print the run matrix without executing")
    args = parser.parse_args(argv)

    try:
        spec = parse_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    out_root = Path(args.out) if args.out else Path(spec.output_dir)
    return run_experiment(spec, out_root, jobs=args.jobs, dry_run=args.dry_run)


def entry() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entry()
