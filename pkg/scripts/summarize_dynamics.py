#!/usr/bin/env python3
"""Digest the sparsity dynamics of a finished experiment directory.

Reads every run's rounds.csv under the given results root and prints, per
run: final accuracy, worst late-phase deviation from the (inferred) target
sparsity, mean client regrowth, and the steady-state per-round traffic.

    python scripts/summarize_dynamics.py results/regrowth [--late-from 20]
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path


def load_rounds(path: Path) -> list[dict[str, float]]:
    with path.open() as fh:
        return [{k: float(v) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", type=Path)
    parser.add_argument("--late-from", type=int, default=20,
                        help="first round of the steady-state window")
    args = parser.parse_args()

    run_dirs = sorted(p for p in args.root.iterdir()
                      if p.is_dir() and (p / "rounds.csv").exists())
    if not run_dirs:
        print(f"no runs under {args.root}", file=sys.stderr)
        return 1

    header = (f"{'run':55s} {'acc':>6s} {'sparsity':>8s} {'late|s-dev|':>11s} "
              f"{'regrowth':>9s} {'traffic':>9s}")
    print(header)
    print("-" * len(header))
    for run in run_dirs:
        rows = load_rounds(run / "rounds.csv")
        if not rows:
            continue
        late = rows[args.late_from:] or rows
        target = max(r["global_sparsity"] for r in rows)
        dev = max(abs(r["global_sparsity"] - target) for r in late)
        regrowth = sum(r["mean_client_regrowth"] for r in rows) / len(rows)
        traffic = sum(r["downlink_nnz"] + r["uplink_nnz_mean"] for r in late) / len(late)
        print(f"{run.name:55s} {rows[-1]['test_accuracy']:6.3f} "
              f"{rows[-1]['global_sparsity']:8.3f} {dev:11.4f} "
              f"{regrowth:9.1f} {traffic:9.0f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
