#!/usr/bin/env python3
"""Render exported guidance-experiment outputs as figures.

Reads only the files written by the main package (trajectories.csv,
stats.json, values.raw / policy.raw / kind.raw + solve_meta.json); it never
imports the solver, so it can point at any results directory.

    python3 plot.py --in <dir> --kind trajectories|values|policy|stats_bar \
        [--z <m>] --out <png>
"""

import argparse
import csv
import glob
import json
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import LineCollection
from matplotlib.lines import Line2D

ASCENT_COLOR = "gold"
CONSTANT_COLOR = "royalblue"
DESCENT_COLOR = "darkturquoise"
DZ_TOL = 1e-9  # meters; |dz| below this counts as constant-depth drifting


class PlotError(Exception):
    pass


def classify_step(dz):
    if dz > DZ_TOL:
        return "ascent"
    if dz < -DZ_TOL:
        return "descent"
    return "constant"


def read_trajectories(path):
    """rollout_id -> list of (t, x, y, z) rows, in file order."""
    rollouts = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != ["rollout_id", "t", "x", "y", "z"]:
            raise PlotError(f"{path}: unrecognized header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rid = int(row[0])
                t, x, y, z = (float(v) for v in row[1:5])
            except (ValueError, IndexError):
                raise PlotError(f"{path}: malformed row {lineno}: {row}")
            rollouts.setdefault(rid, []).append((t, x, y, z))
    if not rollouts:
        raise PlotError(f"{path}: no trajectory rows")
    return rollouts


def plot_trajectories(in_dir, out_path):
    """Map-view polylines, one segment color class per depth-change sign.

    Returns the number of segments drawn per class, which is also what the
    tests recompute from the CSV.
    """
    rollouts = read_trajectories(os.path.join(in_dir, "trajectories.csv"))
    segments = {"ascent": [], "constant": [], "descent": []}
    ends = []
    for rid in sorted(rollouts):
        pts = rollouts[rid]
        for (_, x0, y0, z0), (_, x1, y1, z1) in zip(pts, pts[1:]):
            segments[classify_step(z1 - z0)].append([(x0, y0), (x1, y1)])
        ends.append((pts[-1][1], pts[-1][2]))
    fig, ax = plt.subplots(figsize=(8, 5))
    for kind, color in (("ascent", ASCENT_COLOR), ("constant", CONSTANT_COLOR),
                        ("descent", DESCENT_COLOR)):
        if segments[kind]:
            ax.add_collection(LineCollection(segments[kind], colors=color, lw=0.8))
    ends = np.asarray(ends)
    ax.plot(ends[:, 0], ends[:, 1], "k.", ms=4)
    ax.autoscale()
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title("drift trajectories (map view)")
    ax.legend(handles=[
        Line2D([], [], color=ASCENT_COLOR, label="ascent"),
        Line2D([], [], color=CONSTANT_COLOR, label="constant depth"),
        Line2D([], [], color=DESCENT_COLOR, label="descent"),
        Line2D([], [], color="k", marker=".", ls="", label="final position"),
    ], loc="best", fontsize=8)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return {k: len(v) for k, v in segments.items()}


def load_solution_arrays(in_dir):
    meta_path = os.path.join(in_dir, "solve_meta.json")
    if not os.path.exists(meta_path):
        raise PlotError(f"{in_dir} has no solve_meta.json (not a solution archive?)")
    with open(meta_path) as fh:
        lm = json.load(fh)["lattice"]
    shape = (lm["nx"], lm["ny"], lm["nz"])

    def pull(name, dtype):
        arr = np.fromfile(os.path.join(in_dir, name), dtype=dtype)
        return arr.reshape(shape, order="F")

    return lm, pull("values.raw", "<f4"), pull("policy.raw", "<f4"), pull("kind.raw", "u1")


def nearest_level(lm, z):
    levels = lm["z_top"] - lm["sz"] * np.arange(lm["nz"])
    if z is None or z > levels[0] + lm["sz"] / 2 or z < levels[-1] - lm["sz"] / 2:
        pretty = ", ".join(f"{lv:g}" for lv in levels)
        raise PlotError(f"depth {z} m is outside the lattice; available levels: {pretty}")
    k = int(np.argmin(np.abs(levels - z)))
    return k, float(levels[k])


def plot_slice(in_dir, out_path, z, kind):
    lm, values, policy, node_kind = load_solution_arrays(in_dir)
    k, level = nearest_level(lm, z)
    if abs(level - (z if z is not None else level)) > 1e-9:
        print(f"plot: using nearest lattice level {level:g} m for requested {z:g} m")
    if kind == "values":
        field = np.where(node_kind[:, :, k] == 2, np.nan, values[:, :, k])
        label, cmap, title = "V* (discounted reward)", "viridis", f"state values at z = {level:g} m"
    else:
        dz = policy[:, :, k] - level
        field = np.where(node_kind[:, :, k] == 2, np.nan, dz)
        label, cmap, title = "prescribed depth change (m)", "coolwarm", \
            f"policy depth change at z = {level:g} m"
    x = lm["x0"] + lm["sx"] * np.arange(lm["nx"])
    y = lm["y0"] + lm["sy"] * np.arange(lm["ny"])
    fig, ax = plt.subplots(figsize=(8, 5))
    mesh = ax.pcolormesh(x, y, field.T, cmap=cmap, shading="nearest")
    fig.colorbar(mesh, ax=ax, label=label)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return level


def read_stats(in_dir):
    """stats.json in the directory itself, else one per subdirectory."""
    direct = os.path.join(in_dir, "stats.json")
    paths = [direct] if os.path.exists(direct) else sorted(
        glob.glob(os.path.join(in_dir, "*", "stats.json")))
    if not paths:
        raise PlotError(f"no stats.json under {in_dir}")
    out = []
    for path in paths:
        with open(path) as fh:
            payload = json.load(fh)
        out.extend(payload if isinstance(payload, list) else [payload])
    return out


def plot_stats_bar(in_dir, out_path):
    stats = read_stats(in_dir)
    names = [s["policy"] for s in stats]
    fractions = [s["success_fraction"] for s in stats]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(range(len(names)), fractions, color="steelblue")
    for bar, s in zip(bars, stats):
        med = s.get("median_hours")
        if med is not None and med == med:  # skip NaN
            ax.annotate(f"{med:.0f} h", (bar.get_x() + bar.get_width() / 2,
                                         bar.get_height()),
                        ha="center", va="bottom", fontsize=8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("fraction reaching the goal")
    ax.set_title("policy comparison")
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return names


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--in", dest="in_dir", required=True,
                    help="results directory (rollout export or solution archive)")
    ap.add_argument("--kind", required=True,
                    choices=["trajectories", "values", "policy", "stats_bar"])
    ap.add_argument("--z", type=float, default=None,
                    help="depth slice in meters (values/policy)")
    ap.add_argument("--out", required=True, help="output image path")
    args = ap.parse_args(argv)
    try:
        if args.kind == "trajectories":
            plot_trajectories(args.in_dir, args.out)
        elif args.kind in ("values", "policy"):
            plot_slice(args.in_dir, args.out, args.z, args.kind)
        else:
            plot_stats_bar(args.in_dir, args.out)
    except (PlotError, FileNotFoundError) as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 2
    print(f"plot: wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
