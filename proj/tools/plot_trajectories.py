#!/usr/bin/env python3
"""Plot sensor and target paths from a resin_bench run directory."""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    tracks = defaultdict(list)
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            if row["entity"] == "nominal":
                continue
            tracks[(row["entity"], int(row["id"]))].append((int(row["step"]), float(row["x"]), float(row["y"])))
    return tracks


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("run_dir", type=Path, help="directory containing trajectories.csv")
    ap.add_argument("-o", "--output", type=Path, help="image path (default: <run_dir>/trajectories.png)")
    args = ap.parse_args()

    tracks = load(args.run_dir / "trajectories.csv")
    fig, ax = plt.subplots(figsize=(7, 7))
    for (entity, ident), pts in sorted(tracks.items()):
        pts.sort()
        xs = [p[1] for p in pts]
        ys = [p[2] for p in pts]
        style = "-" if entity == "sensor" else "--"
        line, = ax.plot(xs, ys, style, lw=1.5 if entity == "sensor" else 1.0, label=f"{entity} {ident}")
        ax.plot(xs[0], ys[0], "o", color=line.get_color(), ms=4)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(fontsize=7, ncol=2)
    out = args.output or args.run_dir / "trajectories.png"
    fig.savefig(out, dpi=120, bbox_inches="tight")
    print(out)


if __name__ == "__main__":
    main()
