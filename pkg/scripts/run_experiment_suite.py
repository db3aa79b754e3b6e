#!/usr/bin/env python3
"""Run the bundled experiment configs end to end.

Executes each config under configs/ (or a chosen subset) with the standard
runner, writing results under results/. Usage:

    python scripts/run_experiment_suite.py [--jobs N] [--only regrowth,...] [--dry-run]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from fedsparse.cli import main as simulate

REPO = Path(__file__).resolve().parent.parent
DEFAULT_ORDER = [
    "quickstart",
    "regrowth",
    "mask_consensus",
    "heterogeneous_groups",
    "activation_ablation",
    "wide_federation",
    "main_grid",
]


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--only", default="",
                        help="comma-separated config names (without .toml)")
    parser.add_argument("--dry-run", action="store_true")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    names = [n for n in args.only.split(",") if n] or DEFAULT_ORDER
    status = 0
    for name in names:
        config = REPO / "configs" / f"{name}.toml"
        if not config.exists():
            print(f"skipping {name}: no such config", file=sys.stderr)
            status = 1
            continue
        argv = ["--config", str(config), "--jobs", str(args.jobs)]
        if args.dry_run:
            argv.append("--dry-run")
        start = time.monotonic()
        code = simulate(argv)
        print(f"[{name}] exit {code} after {time.monotonic() - start:.0f}s")
        status = status or code
    return status


if __name__ == "__main__":
    sys.exit(main())
