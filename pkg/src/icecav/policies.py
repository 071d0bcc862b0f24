"""Depth-selection policies: two open-loop baselines, the lattice policy,
and belief-averaged action selection over Gaussian position uncertainty.

Every policy maps a belief to a target depth.  Feasibility clipping against
the true state happens in the simulator; policies only see the belief.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FlowDomainError
from . import solver as sv


@dataclass
class Belief:
    """Gaussian position belief: mean (x, y, z) and per-axis sigmas."""

    mean: tuple
    sigma: tuple = (0.0, 0.0, 0.0)
    n_samples: int = 64

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.sigma) != 3:
            raise ConfigurationError("belief mean and sigma must be 3-vectors")
        if any(s < 0 for s in self.sigma):
            raise ConfigurationError("belief sigmas must be non-negative")
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")

    def draw(self, rng, n):
        mean = np.asarray(self.mean, dtype=float)
        noise = rng.normal(0.0, 1.0, size=(n, 3)) * np.asarray(self.sigma, dtype=float)
        return mean[None, :] + noise


def uncontrolled_action(s):
    """Hold the current depth; the flow does all the work."""
    return s[2]


def constant_fraction_action(envelope, s, f):
    """Target a fixed fraction of the local water-column depth.

    f = 0 floats at the ice ceiling, f = 1 sits on the seafloor.  The caller
    (or the simulator) clips to the admissible interval; this returns the
    raw target so that the target is independent of the query depth.
    """
    if not 0 <= f <= 1:
        raise ConfigurationError(f"depth fraction must be in [0, 1], got {f}")
    floor, ceil = envelope.column_bounds(s[0], s[1])
    if not np.isfinite(floor):
        raise FlowDomainError("xy", f"column at ({s[0]}, {s[1]}) is not navigable")
    return ceil - f * (ceil - floor)


def mdp_action(mdp, lat, policy, s):
    """Stored lattice policy at the nearest valid node, clipped to s."""
    return sv.policy_lookup(mdp, lat, policy, s)


def qmdp_action(mdp, lat, policy, q_table, belief, rng):
    """Belief-averaged depth selection over the solved Q function.

    Belief samples are snapped to their nearest valid lattice nodes and the
    stored Q table is read there, so the sample's Q(s, a) is the solver's
    one-step backup at that node.  Candidate depths are the lattice levels
    admissible at every retained sample; ties go to the depth nearest the
    belief mean, then to the smaller level change at the snapped mean.
    """
    cap = 10 * belief.n_samples
    kept = []
    n_kept = 0
    drawn = 0
    while drawn < cap and n_kept < belief.n_samples:
        batch = min(belief.n_samples - n_kept + 4, cap - drawn)
        pts = belief.draw(rng, batch)
        drawn += batch
        snapped = sv.nearest_valid_nodes(lat, pts)
        snapped = snapped[snapped >= 0]
        kept.append(snapped)
        n_kept += len(snapped)
    nodes = np.concatenate(kept)[: belief.n_samples] if kept else np.empty(0, np.int64)
    if len(nodes) == 0:
        pts = np.asarray(belief.mean, dtype=float)[None, :]
        nodes = sv.nearest_valid_nodes(lat, pts)
        nodes = nodes[nodes >= 0]
        if len(nodes) == 0:
            return mdp_action(mdp, lat, policy, belief.mean)
    _, _, k = lat.unflatten(nodes)
    # candidate absolute levels admissible at every retained sample
    offsets = lat.offsets
    levels = np.arange(lat.nz)
    ok = np.ones(lat.nz, dtype=bool)
    for ni, ki in zip(nodes, k):
        o = levels - ki
        in_range = (o >= offsets[0]) & (o <= offsets[-1])
        col = np.searchsorted(offsets, np.clip(o, offsets[0], offsets[-1]))
        ok &= in_range & np.isfinite(q_table[ni, col])
    cand = levels[ok]
    if len(cand) == 0:
        return mdp_action(mdp, lat, policy, belief.mean)
    cols = np.searchsorted(offsets, cand[None, :] - k[:, None])
    score = q_table[nodes[:, None], cols].mean(axis=0)
    depth = lat.z_top - lat.sz * cand.astype(float)
    best = score.max()
    tied = np.isclose(score, best, rtol=0.0, atol=0.0)
    # primary tie-break: action depth nearest the belief mean
    dist_mean = np.abs(depth - belief.mean[2])
    # secondary: smallest level change at the snapped mean, descent first
    mean_node = sv.nearest_valid_nodes(lat, np.asarray(belief.mean, dtype=float)[None, :])[0]
    k_mean = lat.unflatten(mean_node)[2] if mean_node >= 0 else int(np.round(k.mean()))
    rank = sv.offset_rank(cand - k_mean)
    order = np.lexsort((rank, dist_mean, ~tied))
    a = depth[order[0]]
    lo, hi = mdp.action_interval(belief.mean)
    return min(max(a, lo), hi)


# -- policy objects for the simulator -----------------------------------------


@dataclass
class PolicySpec:
    """A named action rule with everything it needs bound in."""

    name: str
    fn: object  # (belief, rng) -> depth

    def __call__(self, belief, rng):
        return self.fn(belief, rng)


def make_uncontrolled():
    return PolicySpec("uncontrolled", lambda belief, rng: uncontrolled_action(belief.mean))


def make_constant_fraction(envelope, f):
    def act(belief, rng):
        return constant_fraction_action(envelope, belief.mean, f)

    return PolicySpec(f"constfrac:{f:g}", act)


def make_mdp(mdp, lat, policy):
    return PolicySpec("mdp", lambda belief, rng: mdp_action(mdp, lat, policy, belief.mean))


def make_qmdp(mdp, lat, policy, q_table, n_samples=64):
    def act(belief, rng):
        b = Belief(mean=belief.mean, sigma=belief.sigma, n_samples=n_samples)
        return qmdp_action(mdp, lat, policy, q_table, b, rng)

    return PolicySpec("qmdp", act)
