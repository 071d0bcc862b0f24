#!/usr/bin/env python3
"""Full guidance comparison on the synthetic cavity.

Synthesizes the default flow grid (unless one is already cached), solves the
depth-control MDP, rolls out the four policies with their respective belief
noise levels, and writes per-policy rollout exports plus a summary table.
The output directory is directly consumable by the viz package.

Example:
    python3 scripts/run_ordering_experiment.py --out results/ordering --n 500
"""

import argparse
import os
import sys
import time

import numpy as np

from icecav import cli, gridio
from icecav import simulator as sim
from icecav import solver as sv
from icecav.mdp import build_mdp, load_scenario

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

POLICY_SPECS = ["uncontrolled", "constfrac:0.75", "mdp", "qmdp:1000,1000,3,64"]


def sigma_for(spec_text):
    if spec_text.startswith("qmdp:"):
        sx, sy, sz, _ = spec_text.split(":", 1)[1].split(",")
        return (float(sx), float(sy), float(sz))
    return (0.0, 0.0, 0.0)


def build_policy(spec_text, mdp, lat, policy, q_table):
    spec, _ = cli.parse_policy_spec(spec_text, mdp, lat, policy, q_table)
    return spec


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="experiment output directory")
    ap.add_argument("--params", default=os.path.join(REPO, "scenarios/cavity_default.json"))
    ap.add_argument("--scenario", default=os.path.join(REPO, "scenarios/grounding_run.json"))
    ap.add_argument("--n", type=int, default=500, help="rollouts per policy")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args(argv)

    grid_dir = os.path.join(args.out, "grid")
    sol_dir = os.path.join(args.out, "solution")
    if not os.path.exists(os.path.join(grid_dir, "manifest.json")):
        rc = cli.main(["synth", "--params", args.params, "--seed", str(args.seed),
                       "--out", grid_dir])
        if rc != 0:
            return rc
    if not os.path.exists(os.path.join(sol_dir, "solve_meta.json")):
        rc = cli.main(["solve", "--grid", grid_dir, "--scenario", args.scenario,
                       "--out", sol_dir])
        if rc != 0:
            return rc

    grid = gridio.read_grid(grid_dir)
    scen = load_scenario(args.scenario)
    mdp = build_mdp(grid, scen["config"], scen["terminals"], subsample=0.2)
    lat, vf, policy, q_table, _ = sv.load_solution(sol_dir)

    run_dirs = []
    all_stats = []
    for spec_text in POLICY_SPECS:
        spec = build_policy(spec_text, mdp, lat, policy, q_table)
        config = sim.RolloutConfig(
            n_rollouts=args.n, start=tuple(scen["start"]),
            sigma=sigma_for(spec_text), seed=args.seed)
        t0 = time.time()
        records = [sim.run_rollout(grid, mdp, spec, config, i)
                   for i in range(args.n)]
        stats = sim.compute_stats(spec.name, records, "grounding_zone")
        out = os.path.join(args.out, "rollouts_" + spec.name.replace(":", "_"))
        sim.export_rollouts(records, out, stats=stats)
        run_dirs.append(out)
        all_stats.append(stats)
        print(f"{spec.name:20s} success {stats.success_fraction:5.2f}  "
              f"median {stats.median_hours:7.1f} h  "
              f"({time.time() - t0:.0f} s)")

    rc = cli.main(["report", *run_dirs,
                   "--out", os.path.join(args.out, "summary.csv")])
    np.save(os.path.join(args.out, "residual_history.npy"), vf.history)
    return rc


if __name__ == "__main__":
    sys.exit(main())
