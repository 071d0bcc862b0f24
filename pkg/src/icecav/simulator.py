"""Monte Carlo rollout engine.

Ground truth advects with the full time axis of the flow grid (the planner
only ever saw a temporal subsample); the vehicle's belief is resynthesized
every step as the true position plus fresh Gaussian noise.  Rollouts are
deterministic given (grid, scenario, policy, seed): rollout i draws from its
own stream seeded by (seed, i), and start times are drawn once up front so
the same sequence pairs across policies.
"""

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ActionError, ConfigurationError, FlowDomainError, IcecavError
from .flowfield import interpolate_velocity
from .policies import Belief

THREE_MONTHS = 7_776_000.0  # seconds


@dataclass(frozen=True)
class RolloutConfig:
    n_rollouts: int = 500
    start: tuple = (0.0, 0.0, 0.0)
    timeout: float = THREE_MONTHS
    delta: float = 3600.0
    sigma: tuple = (1000.0, 1000.0, 3.0)
    seed: int = 0
    success_label: str = "grounding_zone"

    def __post_init__(self):
        if self.n_rollouts < 1:
            raise ConfigurationError("n_rollouts must be >= 1")
        if not self.timeout > self.delta:
            raise ConfigurationError("timeout must exceed the step length")


@dataclass
class RolloutRecord:
    rollout_id: int
    policy: str
    t_start: float
    steps: list  # (t, x, y, z, action, belief_mean) per step
    outcome: str
    time_to_outcome: float
    cumulative_reward: float
    cumulative_energy: float


@dataclass
class RolloutStats:
    policy: str
    n_rollouts: int
    outcomes: dict
    success_fraction: float
    median_hours: float  # NaN when no rollout succeeded
    std_hours: float
    mean_reward: float

    def as_dict(self):
        return {
            "policy": self.policy,
            "n_rollouts": self.n_rollouts,
            "outcomes": dict(sorted(self.outcomes.items())),
            "success_fraction": self.success_fraction,
            "median_hours": self.median_hours,
            "std_hours": self.std_hours,
            "mean_reward": self.mean_reward,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            policy=d["policy"], n_rollouts=d["n_rollouts"], outcomes=d["outcomes"],
            success_fraction=d["success_fraction"], median_hours=d["median_hours"],
            std_hours=d["std_hours"], mean_reward=d["mean_reward"],
        )


def _wrap_time(spec, t):
    """Fold a simulation time into the grid's (cyclic) time axis."""
    span = (spec.nt - 1) * spec.dt
    if span <= 0:
        return spec.t0
    return spec.t0 + (t - spec.t0) % span


def run_rollout(grid, mdp, policy, config, rollout_index, t_start=None):
    """Simulate one drift from the configured start.

    When t_start is omitted it comes from the shared paired sequence for
    this rollout index.
    """
    cfg = mdp.config
    if t_start is None:
        t_start = start_times(grid, config)[rollout_index]
    if not mdp.is_valid_state(config.start):
        raise ConfigurationError(f"start state {config.start} is not valid")
    rng = np.random.default_rng([config.seed, rollout_index])
    sigma = np.asarray(config.sigma, dtype=float)
    s = tuple(float(v) for v in config.start)
    t = float(t_start)
    steps = []
    reward = 0.0
    energy = 0.0
    outcome = mdp.classify_terminal(s)
    label = None
    elapsed = 0.0
    if outcome is not None:
        label = outcome[0]
        reward += outcome[1]
    else:
        max_steps = int(np.floor(config.timeout / config.delta))
        for _ in range(max_steps):
            noise = rng.normal(0.0, 1.0, size=3) * sigma
            belief = Belief(mean=(s[0] + noise[0], s[1] + noise[1], s[2] + noise[2]),
                            sigma=tuple(sigma))
            try:
                a = policy(belief, rng)
            except (ActionError, FlowDomainError, IcecavError):
                a = belief.mean[2]  # noisy belief left the model; hold depth
            a = mdp.clip_action(s, a)
            vel = interpolate_velocity(grid, s, _wrap_time(grid.spec, t))
            steps.append((t, s[0], s[1], s[2], a, belief.mean))
            r = mdp.reward(s, a)
            reward += r
            energy += -r
            s = (s[0] + vel[0] * cfg.delta, s[1] + vel[1] * cfg.delta, a)
            t += config.delta
            elapsed += config.delta
            outcome = mdp.classify_terminal(s)
            if outcome is not None:
                label = outcome[0]
                reward += outcome[1]
                break
        if label is None:
            label = "timeout"
    return RolloutRecord(
        rollout_id=rollout_index, policy=getattr(policy, "name", "policy"),
        t_start=t_start, steps=steps, outcome=label, time_to_outcome=elapsed,
        cumulative_reward=reward, cumulative_energy=energy,
    )


def start_times(grid, config):
    """Paired start-time sequence: one draw per rollout, shared by policies."""
    span = (grid.spec.nt - 1) * grid.spec.dt
    rng = np.random.default_rng([config.seed])
    return grid.spec.t0 + rng.uniform(0.0, span, size=config.n_rollouts)


def compute_stats(policy_name, records, success_label):
    outcomes = {}
    for rec in records:
        outcomes[rec.outcome] = outcomes.get(rec.outcome, 0) + 1
    hours = np.asarray(
        [r.time_to_outcome / 3600.0 for r in records if r.outcome == success_label]
    )
    n = len(records)
    return RolloutStats(
        policy=policy_name,
        n_rollouts=n,
        outcomes=outcomes,
        success_fraction=len(hours) / n if n else 0.0,
        median_hours=float(np.median(hours)) if len(hours) else float("nan"),
        std_hours=float(np.std(hours)) if len(hours) else float("nan"),
        mean_reward=float(np.mean([r.cumulative_reward for r in records])) if n else 0.0,
    )


def run_experiment(grid, mdp, policies, config):
    """n_rollouts per policy with a shared start-time sequence.

    Returns (stats_by_policy, records_by_policy), both keyed by policy name
    in input order.
    """
    times = start_times(grid, config)
    all_stats = {}
    all_records = {}
    for policy in policies:
        records = [
            run_rollout(grid, mdp, policy, config, i, times[i])
            for i in range(config.n_rollouts)
        ]
        all_records[policy.name] = records
        all_stats[policy.name] = compute_stats(policy.name, records, config.success_label)
    return all_stats, all_records


# -- exports -------------------------------------------------------------------


def export_rollouts(records, out_dir, stats=None):
    """trajectories.csv + outcomes.csv (+ stats.json); byte-stable ordering."""
    if not records:
        raise ConfigurationError("no rollout records to export")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trajectories.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rollout_id", "t", "x", "y", "z", "action", "outcome"])
        for rec in records:
            for (t, x, y, z, a, _) in rec.steps:
                w.writerow([rec.rollout_id, f"{t:.1f}", f"{x:.3f}", f"{y:.3f}",
                            f"{z:.3f}", f"{a:.3f}", rec.outcome])
    with open(os.path.join(out_dir, "outcomes.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rollout_id", "outcome", "time_to_outcome_s"])
        for rec in records:
            w.writerow([rec.rollout_id, rec.outcome, f"{rec.time_to_outcome:.1f}"])
    if stats is not None:
        write_stats(os.path.join(out_dir, "stats.json"), stats)


def write_stats(path, stats):
    if isinstance(stats, RolloutStats):
        payload = stats.as_dict()
    else:
        payload = [s.as_dict() for s in stats]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_stats(path):
    with open(path) as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        return RolloutStats.from_dict(payload)
    return [RolloutStats.from_dict(d) for d in payload]
