#!/usr/bin/env python3
"""Plot stopping boundaries A*(K), B*(K) from `seqtest sweep` CSV files.

Example:
    seqtest sweep ce:1,1      --K-min 8.5 --K-max 100 --points 200 --log --out ce.csv
    seqtest sweep l1          --K-min 8.5 --K-max 100 --points 200 --log --out l1.csv
    seqtest sweep classic:1,1 --K-min 8.5 --K-max 100 --points 200 --log --out classic.csv
    python3 scripts/plot_boundaries.py ce.csv l1.csv classic.csv --log-x --out boundaries.png
"""

import argparse
import csv
import sys


def read_sweep(path):
    ks, a, b = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if not row["A"]:
                continue  # degenerate row: no boundaries
            ks.append(float(row["K"]))
            a.append(float(row["A"]))
            b.append(float(row["B"]))
    return ks, a, b


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv", nargs="+", help="sweep CSV files")
    parser.add_argument("--labels", nargs="*", default=None, help="legend labels (default: file names)")
    parser.add_argument("--log-x", action="store_true", help="logarithmic K axis")
    parser.add_argument("--out", default="boundaries.png", help="output image path")
    args = parser.parse_args()

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        sys.exit("matplotlib is required: pip install matplotlib")

    labels = args.labels or args.csv
    if len(labels) != len(args.csv):
        sys.exit("need as many --labels as CSV files")

    fig, ax = plt.subplots(figsize=(7, 5))
    for path, label in zip(args.csv, labels):
        ks, a, b = read_sweep(path)
        if not ks:
            print(f"warning: {path} has no non-degenerate rows", file=sys.stderr)
            continue
        (line,) = ax.plot(ks, b, label=label)
        ax.plot(ks, a, color=line.get_color())
    if args.log_x:
        ax.set_xscale("log")
    ax.set_xlabel("K")
    ax.set_ylabel("stopping boundaries  A*(K), B*(K)")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
