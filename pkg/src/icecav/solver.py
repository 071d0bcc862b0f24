"""Value iteration on a uniform lattice over the navigable volume.

Off-lattice successor values are interpolated with inverse-distance weights
over the vertices of the containing lattice cell, with distances measured in
stride-normalized coordinates.  Axes on which the query coincides with a
lattice plane are collapsed, so successors (whose depth is always a lattice
level by construction) interpolate over the four corners of the horizontal
face they land on, and node-coincident queries return node values exactly.

Sweeps are synchronous (Jacobi): every backup in a sweep reads the previous
sweep's values, which makes the update a gamma-contraction and the result
independent of evaluation order.
"""

import json
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, IcecavError, NumericalError
from .flowfield import interpolate_velocity_many, time_subsample_indices

_PLANE_EPS = 1e-9  # meters: queries closer than this to a lattice plane lie on it

KIND_REGULAR = 0
KIND_TERMINAL = 1
KIND_INVALID = 2

REASON_VALID = 0
REASON_OUT_OF_COLUMN = 1
REASON_BELOW_RATING = 2


@dataclass
class LatticeSpec:
    x0: float
    y0: float
    z_top: float
    sx: float
    sy: float
    sz: float
    nx: int
    ny: int
    nz: int
    kind: np.ndarray  # (nx, ny, nz) int8
    terminal_value: np.ndarray  # (nx, ny, nz), NaN off terminals
    invalid_reason: np.ndarray  # (nx, ny, nz) int8
    offsets: np.ndarray  # admissible level offsets within the rate limits

    @property
    def n_flat(self):
        return self.nx * self.ny * self.nz

    @property
    def xs(self):
        return self.x0 + self.sx * np.arange(self.nx)

    @property
    def ys(self):
        return self.y0 + self.sy * np.arange(self.ny)

    @property
    def zs(self):
        return self.z_top - self.sz * np.arange(self.nz)

    def flat_index(self, ix, iy, iz):
        return (np.asarray(ix) * self.ny + np.asarray(iy)) * self.nz + np.asarray(iz)

    def unflatten(self, flat):
        flat = np.asarray(flat)
        iz = flat % self.nz
        r = flat // self.nz
        return r // self.ny, r % self.ny, iz

    def node_position(self, flat):
        ix, iy, iz = self.unflatten(flat)
        return np.stack(
            [self.x0 + self.sx * ix, self.y0 + self.sy * iy, self.z_top - self.sz * iz],
            axis=-1,
        )


@dataclass
class ValueFunction:
    values: np.ndarray  # flat over the lattice, NaN at invalid nodes
    iterations: int
    residual: float
    history: np.ndarray
    converged: bool


@dataclass
class Policy:
    action_level: np.ndarray  # flat; target z-level index, own level where moot
    action_depth: np.ndarray  # flat; target depth in meters, NaN at invalid nodes


def admissible_offsets(config, stride_z):
    """Level offsets o (target = level + o) allowed by the vertical rate limits.

    The depth change is a - z = -o * stride_z; the ascent end is open.
    """
    o_min = int(np.floor(-config.max_ascent / stride_z + 1e-12)) + 1
    o_max = int(np.floor(-config.max_descent / stride_z + 1e-12))
    return np.arange(o_min, o_max + 1)


def offset_rank(offsets):
    """Tie-break priority: smaller depth change first, descent before ascent."""
    o = np.asarray(offsets)
    return 2 * np.abs(o) - (o > 0).astype(int)


def build_lattice(mdp, strides, z_anchor=0.0):
    """Uniform lattice over the navigable bounding box.

    Nodes outside navigable water or below the depth rating are flagged with a
    reason; nodes inside a terminal region are frozen at that region's reward.
    """
    sx, sy, sz = strides
    if not (sx > 0 and sy > 0 and sz > 0):
        raise ConfigurationError(f"strides must be positive, got {strides}")
    env = mdp.envelope
    cfg = mdp.config
    nx = int(np.floor((env.x_max - env.x0) / sx + 1e-9)) + 1
    ny = int(np.floor((env.y_max - env.y0) / sy + 1e-9)) + 1
    z_bottom = max(float(np.nanmin(env.z_floor)), cfg.z_min)
    nz = int(np.floor((z_anchor - z_bottom) / sz + 1e-9)) + 1
    lat = LatticeSpec(
        x0=env.x0, y0=env.y0, z_top=z_anchor, sx=sx, sy=sy, sz=sz,
        nx=nx, ny=ny, nz=nz,
        kind=np.zeros((nx, ny, nz), dtype=np.int8),
        terminal_value=np.full((nx, ny, nz), np.nan),
        invalid_reason=np.zeros((nx, ny, nz), dtype=np.int8),
        offsets=admissible_offsets(cfg, sz),
    )
    xx, yy = np.meshgrid(lat.xs, lat.ys, indexing="ij")
    floor, ceil = env.column_bounds_many(xx.ravel(), yy.ravel())
    floor = floor.reshape(nx, ny)
    ceil = ceil.reshape(nx, ny)
    zs = lat.zs
    gt = 1e-6  # same boundary slack as state validity
    in_col = (zs[None, None, :] >= floor[:, :, None] - gt) & (
        zs[None, None, :] <= ceil[:, :, None] + gt
    )
    in_col &= np.isfinite(floor)[:, :, None]
    above_rating = zs[None, None, :] > cfg.z_min
    valid = in_col & above_rating
    lat.kind[~valid] = KIND_INVALID
    lat.invalid_reason[~in_col] = REASON_OUT_OF_COLUMN
    lat.invalid_reason[in_col & ~above_rating] = REASON_BELOW_RATING
    if int(valid.sum(axis=2).max(initial=0)) < 2:
        raise ConfigurationError(
            "vertical stride too coarse: no column holds two valid lattice levels"
        )
    for region in mdp.terminals:
        hit_xy = region.contains_xy_many(xx.ravel(), yy.ravel()).reshape(nx, ny)
        hit = hit_xy[:, :, None] & valid
        if region.z_range is not None:
            zlo, zhi = region.z_range
            hit &= (zs[None, None, :] >= zlo) & (zs[None, None, :] <= zhi)
        hit &= lat.kind == KIND_REGULAR  # first declared region wins
        lat.kind[hit] = KIND_TERMINAL
        lat.terminal_value[hit] = region.reward
    return lat


# -- inverse-distance interpolation ------------------------------------------


def interpolation_weights(lat, point, include_invalid=False):
    """Inverse-distance weights over the containing cell's vertices.

    Returns (flat_indices, weights); weights are >= 0 and sum to one.  Axes on
    which the point lies on a lattice plane are collapsed; a node-coincident
    point gets a single unit weight.  Empty arrays mean the containing cell
    has no usable vertex.
    """
    x, y, z = point
    axes = []
    for f, stride, n in (
        ((x - lat.x0) / lat.sx, lat.sx, lat.nx),
        ((y - lat.y0) / lat.sy, lat.sy, lat.ny),
        ((lat.z_top - z) / lat.sz, lat.sz, lat.nz),
    ):
        r = round(f)
        if abs(f - r) * stride < _PLANE_EPS and 0 <= r <= n - 1:
            axes.append((f, [int(r)]))
        else:
            c = min(max(int(np.floor(f)), 0), n - 2)
            axes.append((f, [c, c + 1]))
    idx_list, dist_list = [], []
    for ix in axes[0][1]:
        for iy in axes[1][1]:
            for iz in axes[2][1]:
                if not include_invalid and lat.kind[ix, iy, iz] == KIND_INVALID:
                    continue
                d2 = (axes[0][0] - ix) ** 2 + (axes[1][0] - iy) ** 2 + (axes[2][0] - iz) ** 2
                idx_list.append(lat.flat_index(ix, iy, iz))
                dist_list.append(np.sqrt(d2))
    if not idx_list:
        return np.empty(0, dtype=np.int64), np.empty(0)
    idx = np.asarray(idx_list, dtype=np.int64)
    dist = np.asarray(dist_list)
    near = dist * min(lat.sx, lat.sy, lat.sz) < _PLANE_EPS
    if near.any():
        w = near.astype(float)
    else:
        w = 1.0 / dist
    return idx, w / w.sum()


def interpolate_value(lat, values, point, fallback=np.nan):
    """Value at an off-lattice point; `fallback` when no valid vertex exists."""
    idx, w = interpolation_weights(lat, point)
    if len(idx) == 0:
        return float(fallback)
    return float(np.dot(values[idx], w))


# -- lattice velocity distributions ------------------------------------------


def lattice_distributions(grid, lat, node_flat, subsample):
    """Per-node horizontal velocity samples (vx, vy), one per retained step."""
    tidx = time_subsample_indices(grid.spec.nt, subsample)
    times = grid.spec.t0 + grid.spec.dt * tidx
    pts = lat.node_position(node_flat)
    vx = np.empty((len(node_flat), len(times)))
    vy = np.empty_like(vx)
    for j, t in enumerate(times):
        vel = interpolate_velocity_many(grid, pts, np.full(len(pts), t))
        vx[:, j] = vel[:, 0]
        vy[:, j] = vel[:, 1]
    return vx, vy


# -- vectorized backup operator ----------------------------------------------


@dataclass
class BackupOperator:
    """Precomputed affine Bellman backup  Q = r + gamma * (const + W @ V).

    One row per (node, action); rows are grouped contiguously by node.
    """

    lat: LatticeSpec
    config: object
    backed: np.ndarray  # flat node indices receiving backups
    W: sp.csr_matrix
    const: np.ndarray
    r: np.ndarray
    pair_offset: np.ndarray
    group_start: np.ndarray  # len(backed) + 1
    frozen_values: np.ndarray  # flat template: terminals/absorbing set, NaN invalid

    def initial_values(self):
        v = self.frozen_values.copy()
        v[self.backed] = 0.0
        return v

    def sweep(self, values):
        """One synchronous sweep; returns (new_values, residual, q)."""
        q = self.r + self.config.gamma * (self.const + self.W @ values)
        new_backed = np.maximum.reduceat(q, self.group_start[:-1])
        residual = float(np.max(np.abs(new_backed - values[self.backed]), initial=0.0))
        out = values.copy()
        out[self.backed] = new_backed
        return out, residual, q

    def extract_policy(self, q):
        """Argmax actions; ties toward the smallest depth change, then descent."""
        rank = offset_rank(self.pair_offset)
        starts = self.group_start[:-1]
        qmax = np.maximum.reduceat(q, starts)
        qmax_pair = np.repeat(qmax, np.diff(self.group_start))
        tied_rank = np.where(q == qmax_pair, rank, np.iinfo(np.int64).max)
        best_rank = np.minimum.reduceat(tied_rank, starts)
        sel = (q == qmax_pair) & (tied_rank == np.repeat(best_rank, np.diff(self.group_start)))
        pair_ids = np.flatnonzero(sel)
        first = pair_ids[np.searchsorted(pair_ids, starts)]
        return self.pair_offset[first]


def _horizontal_weights(lat, xd, yd):
    """Per-point corner weights on the lattice's horizontal grid.

    Returns (cx, cy, wts) with wts (n, 4) over corners in the order
    (cx,cy), (cx+1,cy), (cx,cy+1), (cx+1,cy+1); collapsed axes get zero
    weight on their far corners, matching interpolation_weights.
    """
    fx = (xd - lat.x0) / lat.sx
    fy = (yd - lat.y0) / lat.sy
    out = []
    for f, stride, n in ((fx, lat.sx, lat.nx), (fy, lat.sy, lat.ny)):
        r = np.round(f)
        on_plane = (np.abs(f - r) * stride < _PLANE_EPS) & (r >= 0) & (r <= n - 1)
        c = np.clip(np.floor(f).astype(np.int64), 0, n - 2)
        c = np.where(on_plane, np.minimum(r.astype(np.int64), n - 2), c)
        out.append((c, f - c, on_plane, r.astype(np.int64) - c))
    (cx, rx, px, bx), (cy, ry, py, by) = out
    n = len(np.atleast_1d(fx))
    d2 = np.empty((n, 4))
    keep = np.empty((n, 4), dtype=bool)
    corners = ((0, 0), (1, 0), (0, 1), (1, 1))
    for ci, (ox, oy) in enumerate(corners):
        d2[:, ci] = (rx - ox) ** 2 + (ry - oy) ** 2
        keep[:, ci] = (~px | (ox == bx)) & (~py | (oy == by))
    dist = np.sqrt(d2)
    exact = dist * min(lat.sx, lat.sy) < _PLANE_EPS
    wts = np.where(keep, 1.0 / np.maximum(dist, 1e-300), 0.0)
    has_exact = exact.any(axis=1)
    wts[has_exact] = (exact & keep)[has_exact].astype(float)
    return cx, cy, wts


def build_backup_operator(mdp, lat, backed, vx, vy, chunk=1500):
    """Assemble the sparse backup operator from per-node velocity samples."""
    cfg = mdp.config
    env = mdp.envelope
    nS = vx.shape[1]
    ix_all, iy_all, iz_all = lat.unflatten(backed)
    kind = lat.kind
    offsets = lat.offsets

    # enumerate pairs: for each backed node, its admissible offsets
    avail = []
    for o in offsets:
        m = iz_all + o
        ok = (m >= 0) & (m < lat.nz)
        okm = np.zeros(len(backed), dtype=bool)
        okm[ok] = kind[ix_all[ok], iy_all[ok], m[ok]] != KIND_INVALID
        avail.append(okm)
    avail = np.stack(avail, axis=1)  # (n_backed, n_off)
    n_actions = avail.sum(axis=1)
    has_action = n_actions > 0
    backed = backed[has_action]
    ix_all, iy_all, iz_all = ix_all[has_action], iy_all[has_action], iz_all[has_action]
    vx, vy = vx[has_action], vy[has_action]
    avail = avail[has_action]
    n_actions = n_actions[has_action]

    group_start = np.concatenate([[0], np.cumsum(n_actions)])
    n_pairs = int(group_start[-1])
    pair_offset = np.empty(n_pairs, dtype=np.int64)
    const = np.zeros(n_pairs)
    r_pair = np.empty(n_pairs)
    # per-chunk CSR conversion sums duplicate (pair, vertex) entries early,
    # keeping the transient triplet arrays bounded by the chunk size
    chunk_mats = []

    for lo in range(0, len(backed), chunk):
        hi = min(lo + chunk, len(backed))
        sl = slice(lo, hi)
        nodes = np.arange(lo, hi)
        xn = lat.x0 + lat.sx * ix_all[sl]
        yn = lat.y0 + lat.sy * iy_all[sl]
        xd = (xn[:, None] + vx[sl] * cfg.delta).ravel()
        yd = (yn[:, None] + vy[sl] * cfg.delta).ravel()
        floor_d, ceil_d = env.column_bounds_many(xd, yd)
        inpoly = [reg.contains_xy_many(xd, yd) for reg in mdp.terminals]
        cx, cy, hw = _horizontal_weights(lat, xd, yd)
        corner_flat_cols = [
            (np.clip(cx + ox, 0, lat.nx - 1) * lat.ny + np.clip(cy + oy, 0, lat.ny - 1))
            for ox, oy in ((0, 0), (1, 0), (0, 1), (1, 1))
        ]
        rows_c, cols_c, data_c = [], [], []
        pid_base = group_start[lo]
        for oi, o in enumerate(offsets):
            sub = np.flatnonzero(avail[sl, oi])
            if len(sub) == 0:
                continue
            m = iz_all[sl][sub] + o
            z_m = lat.z_top - lat.sz * m
            # row index of each (node, offset) pair
            pid = group_start[lo + sub] + (avail[sl][sub, :oi].sum(axis=1))
            pair_offset[pid] = o
            r_pair[pid] = cfg.e_h + cfg.alpha_b * np.maximum(-o * lat.sz, 0.0)
            take = (sub[:, None] * nS + np.arange(nS)[None, :]).ravel()
            fl = floor_d[take].reshape(len(sub), nS)
            ce = ceil_d[take].reshape(len(sub), nS)
            remaining = np.ones((len(sub), nS), dtype=bool)
            cadd = np.zeros((len(sub), nS))
            for reg, mask in zip(mdp.terminals, inpoly):
                hit = remaining & mask[take].reshape(len(sub), nS)
                if reg.z_range is not None:
                    zr = (z_m >= reg.z_range[0]) & (z_m <= reg.z_range[1])
                    hit &= zr[:, None]
                cadd += reg.reward * hit
                remaining &= ~hit
            invalid = remaining & (
                ~np.isfinite(fl)
                | (z_m[:, None] > ce + 1e-6)
                | (z_m[:, None] < fl - 1e-6)
                | (z_m[:, None] <= cfg.z_min)
            )
            cadd += cfg.r_infeasible * invalid
            remaining &= ~invalid
            # interpolate over the horizontal face at level m
            w = hw[take].reshape(len(sub), nS, 4) * remaining[:, :, None]
            vcols = np.stack(
                [c[take].reshape(len(sub), nS) for c in corner_flat_cols], axis=2
            ) * lat.nz + m[:, None, None]
            vert_ok = (kind.reshape(-1)[vcols] != KIND_INVALID)
            w = w * vert_ok
            wsum = w.sum(axis=2)
            dead = remaining & (wsum <= 0)
            cadd += cfg.r_infeasible * dead
            live = wsum > 0
            w = np.where(live[:, :, None], w / np.where(live, wsum, 1.0)[:, :, None], 0.0)
            const[pid] = cadd.sum(axis=1) / nS
            nz_mask = w > 0
            rr, ss, cc = np.nonzero(nz_mask)
            rows_c.append(pid[rr] - pid_base)
            cols_c.append(vcols[rr, ss, cc])
            data_c.append(w[rr, ss, cc] / nS)
        n_pairs_chunk = int(group_start[hi] - pid_base)
        chunk_mats.append(sp.coo_matrix(
            (np.concatenate(data_c), (np.concatenate(rows_c), np.concatenate(cols_c))),
            shape=(n_pairs_chunk, lat.n_flat),
        ).tocsr())

    if chunk_mats:
        W = sp.vstack(chunk_mats, format="csr")
    else:
        W = sp.csr_matrix((n_pairs, lat.n_flat))

    frozen = np.full(lat.n_flat, np.nan)
    kindf = lat.kind.reshape(-1)
    frozen[kindf == KIND_TERMINAL] = lat.terminal_value.reshape(-1)[kindf == KIND_TERMINAL]
    # regular nodes with no admissible lattice action are absorbing
    all_regular = np.flatnonzero(kindf == KIND_REGULAR)
    absorbing = np.setdiff1d(all_regular, backed, assume_unique=False)
    frozen[absorbing] = cfg.r_infeasible
    return BackupOperator(
        lat=lat, config=cfg, backed=backed, W=W, const=const, r=r_pair,
        pair_offset=pair_offset, group_start=group_start, frozen_values=frozen,
    )


# -- single-node reference backup --------------------------------------------


def node_actions(mdp, lat, node):
    """Admissible target levels for a lattice node (indices into lat.zs)."""
    ix, iy, iz = node
    out = []
    for o in lat.offsets:
        m = iz + o
        if 0 <= m < lat.nz and lat.kind[ix, iy, m] != KIND_INVALID:
            out.append(m)
    return out


def bellman_backup(mdp, lat, values, node, dist):
    """One Bellman backup at a lattice node, straightforwardly.

    Returns (value, target_level).  The vectorized operator must agree with
    this to within roundoff; tests hold it to that.
    """
    cfg = mdp.config
    ix, iy, iz = node
    s = (lat.x0 + lat.sx * ix, lat.y0 + lat.sy * iy, lat.z_top - lat.sz * iz)
    levels = node_actions(mdp, lat, node)
    if not levels:
        return cfg.r_infeasible, iz
    best = None
    for m in levels:
        a = lat.z_top - lat.sz * m
        acc = 0.0
        for vel in dist.samples:
            s2 = (s[0] + vel[0] * cfg.delta, s[1] + vel[1] * cfg.delta, a)
            outcome = mdp.classify_terminal(s2)
            if outcome is not None:
                acc += outcome[1]
            else:
                acc += interpolate_value(lat, values, s2, fallback=cfg.r_infeasible)
        q = mdp.reward(s, a) + cfg.gamma * acc / len(dist.samples)
        o = m - iz
        rank = 2 * abs(o) - (1 if o > 0 else 0)
        if best is None or q > best[0] + 0.0 or (q == best[0] and rank < best[2]):
            best = (q, m, rank)
    return best[0], best[1]


# -- value iteration ----------------------------------------------------------


def value_iteration(op, tolerance, max_iters=5000):
    """Synchronous sweeps until the sup-norm residual falls below tolerance."""
    if tolerance <= 0:
        raise ConfigurationError("tolerance must be > 0")
    values = op.initial_values()
    history = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        values, residual, _ = op.sweep(values)
        if not np.isfinite(residual):
            bad = op.backed[~np.isfinite(values[op.backed])]
            raise NumericalError(f"non-finite value at lattice nodes {bad[:5]}")
        history.append(residual)
        if residual <= tolerance:
            converged = True
            break
    # greedy policy with respect to the final values, so that the stored
    # Q table and the extracted policy agree action for action
    q = op.r + op.config.gamma * (op.const + op.W @ values)
    offsets = op.extract_policy(q)
    lat = op.lat
    _, _, iz = lat.unflatten(op.backed)
    levels = np.empty(lat.n_flat, dtype=np.int32)
    ix_a, iy_a, iz_a = np.unravel_index(np.arange(lat.n_flat), (lat.nx, lat.ny, lat.nz))
    levels[:] = iz_a  # hold depth wherever no backup applies
    levels[op.backed] = iz + offsets
    depth = lat.z_top - lat.sz * levels.astype(float)
    depth[lat.kind.reshape(-1) == KIND_INVALID] = np.nan
    vf = ValueFunction(
        values=values, iterations=it, residual=history[-1] if history else np.inf,
        history=np.asarray(history), converged=converged,
    )
    return vf, Policy(action_level=levels, action_depth=depth)


def q_table_from_values(op, values):
    """Dense (n_flat, n_offsets) Q table for belief-averaged action selection.

    NaN marks inadmissible (node, offset) pairs; frozen nodes carry their
    frozen value in the hold column only.
    """
    lat = op.lat
    n_off = len(lat.offsets)
    table = np.full((lat.n_flat, n_off), np.nan, dtype=np.float64)
    q = op.r + op.config.gamma * (op.const + op.W @ values)
    counts = np.diff(op.group_start)
    node_of_pair = np.repeat(np.arange(len(op.backed)), counts)
    off_col = np.searchsorted(lat.offsets, op.pair_offset)
    table[op.backed[node_of_pair], off_col] = q
    hold_col = int(np.searchsorted(lat.offsets, 0))
    frozen = np.isfinite(op.frozen_values)
    table[frozen, hold_col] = op.frozen_values[frozen]
    return table


# -- nearest-node lookup -------------------------------------------------------


def nearest_valid_nodes(lat, points, max_norm_dist=None):
    """Flat index of the nearest non-invalid node per point, -1 when none is
    within `max_norm_dist` (stride-normalized; default one cell diagonal).
    Ties break toward the lowest flat index."""
    if max_norm_dist is None:
        max_norm_dist = np.sqrt(3.0) + 1e-9
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fx = (pts[:, 0] - lat.x0) / lat.sx
    fy = (pts[:, 1] - lat.y0) / lat.sy
    fz = (lat.z_top - pts[:, 2]) / lat.sz
    base = [np.clip(np.round(f).astype(np.int64), 0, n - 1)
            for f, n in ((fx, lat.nx), (fy, lat.ny), (fz, lat.nz))]
    best_d = np.full(len(pts), np.inf)
    best_i = np.full(len(pts), -1, dtype=np.int64)
    kindf = lat.kind.reshape(-1)
    for ox in (-1, 0, 1):
        for oy in (-1, 0, 1):
            for oz in (-1, 0, 1):
                ix = np.clip(base[0] + ox, 0, lat.nx - 1)
                iy = np.clip(base[1] + oy, 0, lat.ny - 1)
                iz = np.clip(base[2] + oz, 0, lat.nz - 1)
                flat = lat.flat_index(ix, iy, iz)
                d = np.sqrt((fx - ix) ** 2 + (fy - iy) ** 2 + (fz - iz) ** 2)
                ok = (kindf[flat] != KIND_INVALID) & (d <= max_norm_dist)
                better = ok & (
                    (d < best_d - 1e-15)
                    | (np.isclose(d, best_d, rtol=0.0, atol=1e-12) & (flat < best_i))
                )
                best_d[better] = d[better]
                best_i[better] = flat[better]
    return best_i


def _nearest_valid_node_scalar(lat, x, y, z, max_norm_dist):
    """Single-point counterpart of nearest_valid_nodes (rollout hot path)."""
    fx = (x - lat.x0) / lat.sx
    fy = (y - lat.y0) / lat.sy
    fz = (lat.z_top - z) / lat.sz
    bx = min(max(int(round(fx)), 0), lat.nx - 1)
    by = min(max(int(round(fy)), 0), lat.ny - 1)
    bz = min(max(int(round(fz)), 0), lat.nz - 1)
    kind = lat.kind
    best_d = np.inf
    best = -1
    for ox in (-1, 0, 1):
        ix = min(max(bx + ox, 0), lat.nx - 1)
        ddx = (fx - ix) ** 2
        for oy in (-1, 0, 1):
            iy = min(max(by + oy, 0), lat.ny - 1)
            ddy = (fy - iy) ** 2
            for oz in (-1, 0, 1):
                iz = min(max(bz + oz, 0), lat.nz - 1)
                if kind[ix, iy, iz] == KIND_INVALID:
                    continue
                d = np.sqrt(ddx + ddy + (fz - iz) ** 2)
                if d > max_norm_dist:
                    continue
                flat = (ix * lat.ny + iy) * lat.nz + iz
                if d < best_d - 1e-15 or (abs(d - best_d) <= 1e-12 and flat < best):
                    best_d = d
                    best = flat
    return best


def policy_lookup(mdp, lat, policy, s):
    """Action of the nearest valid lattice node, clipped to the admissible
    continuous interval at s."""
    flat = _nearest_valid_node_scalar(
        lat, float(s[0]), float(s[1]), float(s[2]), np.sqrt(3.0) + 1e-9)
    if flat < 0:
        raise IcecavError(f"no valid lattice node within one cell diagonal of {s}")
    depth = lat.z_top - lat.sz * float(policy.action_level[flat])
    return mdp.clip_action(s, depth)


# -- solution archive ----------------------------------------------------------


def save_solution(out_dir, lat, vf, policy, q_table, meta):
    os.makedirs(out_dir, exist_ok=True)
    shape3 = (lat.nx, lat.ny, lat.nz)

    def dump(name, arr, dtype):
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(np.asarray(arr, dtype=dtype).reshape(shape3).tobytes(order="F"))

    dump("values.raw", vf.values, "<f4")
    dump("policy.raw", policy.action_depth, "<f4")
    dump("kind.raw", lat.kind.reshape(-1), "u1")
    with open(os.path.join(out_dir, "qtable.raw"), "wb") as fh:
        fh.write(np.asarray(q_table, dtype="<f4").tobytes(order="C"))
    full_meta = dict(meta)
    full_meta["lattice"] = {
        "x0": lat.x0, "y0": lat.y0, "z_top": lat.z_top,
        "sx": lat.sx, "sy": lat.sy, "sz": lat.sz,
        "nx": lat.nx, "ny": lat.ny, "nz": lat.nz,
        "offsets": [int(o) for o in lat.offsets],
    }
    full_meta["solve"] = {
        "iterations": vf.iterations,
        "residual": vf.residual,
        "converged": bool(vf.converged),
        "residual_history": [float(r) for r in vf.history],
    }
    with open(os.path.join(out_dir, "solve_meta.json"), "w") as fh:
        json.dump(full_meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_solution(in_dir):
    with open(os.path.join(in_dir, "solve_meta.json")) as fh:
        meta = json.load(fh)
    lm = meta["lattice"]
    shape3 = (lm["nx"], lm["ny"], lm["nz"])
    n_flat = int(np.prod(shape3))

    def pull(name, dtype):
        raw = np.fromfile(os.path.join(in_dir, name), dtype=dtype)
        return raw.reshape(shape3, order="F")

    kind = pull("kind.raw", "u1").astype(np.int8)
    values = pull("values.raw", "<f4").astype(float).reshape(-1)
    depth = pull("policy.raw", "<f4").astype(float).reshape(-1)
    offsets = np.asarray(lm["offsets"])
    q_table = np.fromfile(os.path.join(in_dir, "qtable.raw"), dtype="<f4").astype(float)
    q_table = q_table.reshape(n_flat, len(offsets))
    lat = LatticeSpec(
        x0=lm["x0"], y0=lm["y0"], z_top=lm["z_top"],
        sx=lm["sx"], sy=lm["sy"], sz=lm["sz"],
        nx=lm["nx"], ny=lm["ny"], nz=lm["nz"],
        kind=kind, terminal_value=np.full(shape3, np.nan),
        invalid_reason=np.zeros(shape3, dtype=np.int8),
        offsets=offsets,
    )
    with np.errstate(invalid="ignore"):
        levels = np.round((lat.z_top - depth) / lat.sz)
    ix_a, iy_a, iz_a = np.unravel_index(np.arange(n_flat), shape3)
    levels = np.where(np.isfinite(levels), levels, iz_a).astype(np.int32)
    policy = Policy(action_level=levels, action_depth=depth)
    vf = ValueFunction(
        values=values,
        iterations=meta["solve"]["iterations"],
        residual=meta["solve"]["residual"],
        history=np.asarray(meta["solve"]["residual_history"]),
        converged=meta["solve"]["converged"],
    )
    return lat, vf, policy, q_table, meta
