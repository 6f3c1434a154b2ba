#!/usr/bin/env python3
"""Sweep the tile coefficient over a corpus and tabulate dataset growth.

Runs the full pipeline once, then prints how many tiles each N produced
per class (the shape of the dataset a detector would be trained on).

Example:
  python scripts/make_synthetic_corpus.py --out demo_corpus --images 40
  python scripts/tiling_sweep.py --corpus demo_corpus --out demo_out --n 3,5,7
"""

import argparse
import csv
import sys
from pathlib import Path

from leaftile.cli import main as leaftile_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--n", default="3,5,7")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    code = leaftile_main([
        "pipeline",
        "--corpus-root", args.corpus,
        "--annotations", "annotations/*.json",
        "--n", args.n,
        "--seed", str(args.seed),
        "-o", args.out,
    ])
    if code != 0:
        sys.exit(code)

    with open(Path(args.out) / "counts.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    widths = [max(len(cell) for cell in col) for col in zip(*rows)]
    print()
    for row in rows:
        print("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))


if __name__ == "__main__":
    main()
