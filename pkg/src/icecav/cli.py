"""Command-line front end: synth / solve / rollout / report.

Exit codes: 0 success, 2 usage or configuration problems, 3 numerical
failure (non-convergent solve).  All randomness flows from --seed; --threads
(or ICECAV_THREADS) is recorded in the run manifest but the numerics are
vectorized single-process and identical for any value.
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, gridio, policies, simulator, solver
from .errors import ConfigurationError, IcecavError, NumericalError
from .mdp import build_mdp, load_scenario
from .synth import CavityParams, synthesize_cavity

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_obj(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _grid_hash(grid_dir):
    return _sha256_file(os.path.join(grid_dir, "manifest.json"))


def write_run_manifest(out_dir, command, hashes, outputs, wall_time, threads):
    manifest = {
        "command": command,
        "config_hashes": hashes,
        "outputs": sorted(outputs),
        "threads": threads,
        "version": __version__,
        "wall_time_s": wall_time,
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("ICECAV_THREADS")
    return int(env) if env else 1


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args):
    t0 = time.time()
    params = CavityParams.from_json(args.params)
    grid = synthesize_cavity(params, seed=args.seed)
    gridio.write_grid(grid, args.out)
    outputs = [f for f in os.listdir(args.out) if f != "run_manifest.json"]
    write_run_manifest(
        args.out, "synth",
        {"params": _sha256_obj(params.as_dict()), "seed": _sha256_obj(args.seed)},
        outputs, time.time() - t0, _resolve_threads(args),
    )
    print(f"synth: wrote grid archive to {args.out}")
    return EXIT_OK


def _parse_triplet(text, name):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigurationError(f"--{name} wants three comma-separated values")
    return tuple(float(p) for p in parts)


def cmd_solve(args):
    t0 = time.time()
    if not args.tol > 0:
        raise ConfigurationError("--tol must be > 0")
    grid = gridio.read_grid(args.grid)
    scenario = load_scenario(args.scenario)
    mdp = build_mdp(grid, scenario["config"], scenario["terminals"], subsample=args.subsample)
    strides = _parse_triplet(args.stride, "stride")
    lat = solver.build_lattice(mdp, strides)
    backed = np.flatnonzero(lat.kind.reshape(-1) == solver.KIND_REGULAR)
    vx, vy = solver.lattice_distributions(grid, lat, backed, args.subsample)
    op = solver.build_backup_operator(mdp, lat, backed, vx, vy)
    vf, policy = solver.value_iteration(op, tolerance=args.tol, max_iters=args.max_iters)
    q_table = solver.q_table_from_values(op, vf.values)
    meta = {
        "grid_hash": _grid_hash(args.grid),
        "scenario_hash": _sha256_file(args.scenario),
        "stride": list(strides),
        "subsample": args.subsample,
        "tolerance": args.tol,
        "max_iters": args.max_iters,
    }
    solver.save_solution(args.out, lat, vf, policy, q_table, meta)
    outputs = [f for f in os.listdir(args.out) if f != "run_manifest.json"]
    write_run_manifest(
        args.out, "solve",
        {"grid": meta["grid_hash"], "scenario": meta["scenario_hash"],
         "solver": _sha256_obj({"stride": list(strides), "subsample": args.subsample,
                                "tol": args.tol, "max_iters": args.max_iters})},
        outputs, time.time() - t0, _resolve_threads(args),
    )
    if not vf.converged:
        print(f"solve: NOT converged after {vf.iterations} sweeps "
              f"(residual {vf.residual:.3g} > tol {args.tol:.3g}); "
              f"partial results written to {args.out}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"solve: converged in {vf.iterations} sweeps "
          f"(residual {vf.residual:.3g}); wrote {args.out}")
    return EXIT_OK


def parse_policy_spec(text, mdp, lat, policy, q_table):
    """Build the policy named by a --policy spec; returns (PolicySpec, sigma)."""
    if text == "uncontrolled":
        return policies.make_uncontrolled(), (0.0, 0.0, 0.0)
    if text == "mdp":
        _require_solution(lat, text)
        return policies.make_mdp(mdp, lat, policy), (0.0, 0.0, 0.0)
    if text.startswith("constfrac:"):
        f = float(text.split(":", 1)[1])
        if not 0 < f < 1:
            raise ConfigurationError(f"constfrac fraction must be in (0, 1), got {f}")
        return policies.make_constant_fraction(mdp.envelope, f), (0.0, 0.0, 0.0)
    if text.startswith("qmdp:"):
        _require_solution(lat, text)
        parts = text.split(":", 1)[1].split(",")
        if len(parts) != 4:
            raise ConfigurationError("qmdp policy wants qmdp:<sx>,<sy>,<sz>,<Nb>")
        sx, sy, sz = (float(p) for p in parts[:3])
        nb = int(parts[3])
        return (policies.make_qmdp(mdp, lat, policy, q_table, n_samples=nb),
                (sx, sy, sz))
    raise ConfigurationError(f"unrecognized policy spec '{text}'")


def _require_solution(lat, spec):
    if lat is None:
        raise ConfigurationError(f"policy '{spec}' needs --solution")


def cmd_rollout(args):
    t0 = time.time()
    grid = gridio.read_grid(args.grid)
    scenario = load_scenario(args.scenario)
    if scenario["start"] is None:
        raise ConfigurationError("scenario file lacks a start location")
    mdp = build_mdp(grid, scenario["config"], scenario["terminals"])
    lat = policy = q_table = None
    hashes = {"grid": _grid_hash(args.grid), "scenario": _sha256_file(args.scenario)}
    if args.solution:
        lat, _, policy, q_table, sol_meta = solver.load_solution(args.solution)
        hashes["solution"] = _sha256_file(os.path.join(args.solution, "solve_meta.json"))
    spec, sigma = parse_policy_spec(args.policy, mdp, lat, policy, q_table)
    config = simulator.RolloutConfig(
        n_rollouts=args.n, start=scenario["start"], timeout=args.timeout,
        delta=scenario["config"].delta, sigma=sigma, seed=args.seed,
    )
    stats, records = simulator.run_experiment(grid, mdp, [spec], config)
    os.makedirs(args.out, exist_ok=True)
    simulator.export_rollouts(records[spec.name], args.out, stats=stats[spec.name])
    outputs = [f for f in os.listdir(args.out) if f != "run_manifest.json"]
    write_run_manifest(
        args.out, "rollout", {**hashes, "rollout": _sha256_obj(
            {"policy": args.policy, "n": args.n, "seed": args.seed,
             "timeout": args.timeout})},
        outputs, time.time() - t0, _resolve_threads(args),
    )
    s = stats[spec.name]
    print(f"rollout: {spec.name} reached {100 * s.success_fraction:.1f}% "
          f"(median {s.median_hours:.1f} h); wrote {args.out}")
    return EXIT_OK


def cmd_report(args):
    rows = []
    for in_dir in args.inputs:
        path = os.path.join(in_dir, "stats.json")
        if not os.path.exists(path):
            raise ConfigurationError(f"{in_dir} has no stats.json")
        stats = simulator.read_stats(path)
        stats = stats if isinstance(stats, list) else [stats]
        for s in stats:
            rows.append(f"{s.policy},{100 * s.success_fraction:.1f},"
                        f"{s.median_hours:.1f},{s.std_hours:.1f}")
    table = "policy,reached_pct,median_h,std_h\n" + "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table)
    sys.stdout.write(table)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="icecav",
        description="guidance experiments for buoyancy-controlled drifters",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (recorded; numerics are identical for any value)")

    p = sub.add_parser("synth", help="synthesize a cavity flow grid archive")
    p.add_argument("--params", required=True, help="cavity parameter JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("solve", help="value iteration on a lattice over the grid")
    p.add_argument("--grid", required=True, help="grid archive directory")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--stride", default="840,840,25", help="lattice stride sx,sy,sz in m")
    p.add_argument("--subsample", type=float, default=0.2,
                   help="fraction of time steps feeding the velocity distributions")
    p.add_argument("--tol", type=float, default=1.0, help="sup-norm residual tolerance")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("rollout", help="Monte Carlo policy rollouts")
    p.add_argument("--grid", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--solution", default=None, help="solution archive (mdp/qmdp)")
    p.add_argument("--policy", required=True,
                   help="uncontrolled | constfrac:<f> | mdp | qmdp:<sx>,<sy>,<sz>,<Nb>")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--timeout", type=float, default=simulator.THREE_MONTHS)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("report", help="comparison table across rollout outputs")
    p.add_argument("inputs", nargs="+", help="rollout output directories")
    p.add_argument("--out", default=None, help="also write the table to this file")
    common(p)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"icecav {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"icecav {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except IcecavError as exc:
        print(f"icecav {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
