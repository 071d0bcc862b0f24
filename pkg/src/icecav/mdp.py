"""Continuous-state MDP for a buoyancy-controlled drifter.

States are positions (x, y, z) in navigable water above the depth rating.
The only control is the target depth for the next step; horizontal motion is
forced by the flow.  Rewards are non-positive energy costs plus lump terminal
rewards, so maximizing discounted reward minimizes expected energy spent.
"""

import json
from dataclasses import dataclass

import numpy as np
import shapely

from .errors import ActionError, ConfigurationError

_TOL = 1e-9
# slack for containment against interpolated column bounds: bilinear blending
# of equal corner values is not exact in floating point, and a vehicle sitting
# on the boundary must not flip between valid and invalid from roundoff
GEOM_TOL = 1e-6


@dataclass(frozen=True)
class MdpConfig:
    delta: float = 3600.0  # planning time step, s
    z_min: float = -1000.0  # depth rating as signed elevation, m
    ascent_rate_max: float = 0.05  # m/s, > 0
    descent_rate_min: float = -0.05  # m/s, < 0
    gamma: float = 0.999
    e_h: float = -1.0  # hotel-load reward per step
    alpha_b: float = -0.04  # buoyancy-pump reward per meter ascended
    r_infeasible: float = -1000.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigurationError("delta must be > 0")
        if not 0 < self.gamma < 1:
            raise ConfigurationError("gamma must be in (0, 1)")
        if not self.descent_rate_min < 0 < self.ascent_rate_max:
            raise ConfigurationError("need descent_rate_min < 0 < ascent_rate_max")
        if self.e_h > 0 or self.alpha_b > 0:
            raise ConfigurationError("e_h and alpha_b encode costs and must be <= 0")
        if self.r_infeasible >= 0:
            raise ConfigurationError("r_infeasible must be < 0")

    @property
    def max_descent(self):
        return self.delta * self.descent_rate_min  # negative

    @property
    def max_ascent(self):
        return self.delta * self.ascent_rate_max  # positive, exclusive


class TerminalRegion:
    """Polygonal horizontal footprint with an optional z range and a lump reward."""

    def __init__(self, label, reward, polygon, z_range=None):
        self.label = label
        self.reward = float(reward)
        self.polygon = shapely.Polygon(polygon)
        if self.polygon.area <= 0:
            raise ConfigurationError(f"terminal region '{label}' has a degenerate footprint")
        self.z_range = tuple(z_range) if z_range is not None else None

    def contains(self, x, y, z=None):
        if self.z_range is not None and z is not None:
            if not self.z_range[0] <= z <= self.z_range[1]:
                return False
        return bool(shapely.intersects_xy(self.polygon, x, y))

    def contains_xy_many(self, x, y):
        return shapely.intersects_xy(self.polygon, x, y)

    def as_dict(self):
        d = {
            "label": self.label,
            "reward": self.reward,
            "polygon": [list(p) for p in self.polygon.exterior.coords[:-1]],
        }
        if self.z_range is not None:
            d["z_range"] = list(self.z_range)
        return d


@dataclass
class CavityMdp:
    """Navigable envelope + velocity distributions + terminals + parameters.

    `distribution_fn` maps a state tuple to its EmpiricalVelocityDistribution.
    Immutable after construction; all operations are pure.
    """

    envelope: object
    distribution_fn: object
    terminals: list
    config: MdpConfig

    def __post_init__(self):
        labels = [t.label for t in self.terminals]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"terminal labels must be unique, got {labels}")
        env = self.envelope
        hull = shapely.box(env.x0, env.y0, env.x_max, env.y_max)
        for t in self.terminals:
            if not t.polygon.intersects(hull):
                raise ConfigurationError(
                    f"terminal region '{t.label}' does not intersect the horizontal domain"
                )

    # -- state and action sets ------------------------------------------------

    def is_valid_state(self, s):
        x, y, z = s
        if not z > self.config.z_min:
            return False
        floor, ceil = self.envelope.column_bounds(x, y)
        return bool(np.isfinite(floor)) and floor - GEOM_TOL <= z <= ceil + GEOM_TOL

    def action_interval(self, s):
        """Continuous admissible depth interval [lo, hi] for a valid state.

        The rate-limit end of the upper bound is open in the model; `hi` backs
        off by a micrometre so that any value in [lo, hi] is admissible.
        """
        if not self.is_valid_state(s):
            raise ActionError(f"state {s} is not valid")
        x, y, z = s
        floor, ceil = self.envelope.column_bounds(x, y)
        lo = max(z + self.config.max_descent, floor, self.config.z_min + _TOL)
        hi = min(z + self.config.max_ascent - 1e-6, ceil)
        return lo, hi

    def action_feasible(self, s, a):
        x, y, z = s
        if not (self.config.max_descent - _TOL <= a - z < self.config.max_ascent):
            return False
        if not a > self.config.z_min:
            return False
        floor, ceil = self.envelope.column_bounds(x, y)
        return bool(np.isfinite(floor)) and floor - GEOM_TOL <= a <= ceil + GEOM_TOL

    def clip_action(self, s, a):
        lo, hi = self.action_interval(s)
        return min(max(a, lo), hi)

    # -- dynamics -------------------------------------------------------------

    def reward(self, s, a):
        return self.config.e_h + self.config.alpha_b * max(a - s[2], 0.0)

    def classify_terminal(self, s):
        """First terminal region containing s (declaration order), the implicit
        infeasible terminal for invalid states, or None."""
        x, y, z = s
        for region in self.terminals:
            if region.contains(x, y, z):
                return region.label, region.reward
        if not self.is_valid_state(s):
            return "infeasible", self.config.r_infeasible
        return None

    def step(self, s, a, velocity):
        """One transition under a velocity realization.

        Returns (s_next, outcome) where outcome is None for a regular
        transition and (label, reward) when s_next is terminal.
        """
        if not self.action_feasible(s, a):
            raise ActionError(f"action {a} not admissible in state {s}")
        x, y, _ = s
        vx, vy = velocity[0], velocity[1]
        s_next = (x + vx * self.config.delta, y + vy * self.config.delta, a)
        return s_next, self.classify_terminal(s_next)

    def transition_probability(self, s, a, s_next):
        """Sample-based transition kernel; diagnostic counterpart of step()."""
        if abs(s_next[2] - a) > _TOL:
            return 0.0
        dist = self.distribution_fn(s)
        dx = s_next[0] - s[0]
        dy = s_next[1] - s[1]
        d = dist.samples
        hits = (np.abs(d[:, 0] * self.config.delta - dx) <= _TOL) & (
            np.abs(d[:, 1] * self.config.delta - dy) <= _TOL
        )
        return float(hits.sum()) / len(d)


# -- scenario files ----------------------------------------------------------


def load_scenario(path):
    """Scenario JSON: MdpConfig fields, terminal regions, start, grid reference."""
    with open(path) as fh:
        raw = json.load(fh)
    config = MdpConfig(**raw.get("config", {}))
    terminals = [
        TerminalRegion(t["label"], t["reward"], t["polygon"], t.get("z_range"))
        for t in raw.get("terminals", [])
    ]
    start = tuple(raw["start"]) if "start" in raw else None
    return {
        "config": config,
        "terminals": terminals,
        "start": start,
        "grid": raw.get("grid"),
    }


def save_scenario(path, config, terminals, start=None, grid=None):
    raw = {"config": {k: getattr(config, k) for k in (
        "delta", "z_min", "ascent_rate_max", "descent_rate_min",
        "gamma", "e_h", "alpha_b", "r_infeasible")},
        "terminals": [t.as_dict() for t in terminals]}
    if start is not None:
        raw["start"] = list(start)
    if grid is not None:
        raw["grid"] = grid
    with open(path, "w") as fh:
        json.dump(raw, fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_mdp(grid, config, terminals, subsample=1.0):
    """CavityMdp whose distributions come from a flow grid's time axis."""
    from .flowfield import velocity_distribution_at

    env = grid.envelope

    def distribution_fn(s):
        return velocity_distribution_at(grid, s, subsample=subsample, envelope=env)

    return CavityMdp(envelope=env, distribution_fn=distribution_fn,
                     terminals=terminals, config=config)
