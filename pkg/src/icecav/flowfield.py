"""Gridded, time-varying 3-D flow fields with staggered velocity components.

The grid follows the usual C-grid staggering: `u` lives on x-faces, `v` on
y-faces, `w` on z-faces, and scalar quantities (wet fraction) at cell
centers.  The vertical coordinate is signed elevation: the sea surface is at
z = 0 and depth is negative.  Cell centers sit at

    x_i = x0 + i*dx          i in [0, nx)
    y_j = y0 + j*dy          j in [0, ny)
    z_k = z0 - k*dz          k in [0, nz)   (z0 is the top level, shallowest)
    t_n = t0 + n*dt          n in [0, nt)

Horizontal queries are restricted to the cell-center hull, which truncates
the raw grid extent by half a cell on each side.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, FlowDomainError

_COINCIDENCE_EPS = 1e-9  # meters/seconds: treat queries this close to a sample as exact


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    nz: int
    nt: int
    dx: float
    dy: float
    dz: float
    dt: float
    x0: float = 0.0
    y0: float = 0.0
    z0: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        for name in ("nx", "ny", "nz", "nt"):
            if getattr(self, name) < 2:
                raise ConfigurationError(f"{name} must be >= 2, got {getattr(self, name)}")
        for name in ("dx", "dy", "dz", "dt"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.z0 > 0:
            raise ConfigurationError(f"z0 must be <= 0 (signed elevation), got {self.z0}")

    # truncated horizontal hull (cell centers)
    @property
    def x_max(self):
        return self.x0 + (self.nx - 1) * self.dx

    @property
    def y_max(self):
        return self.y0 + (self.ny - 1) * self.dy

    @property
    def t_max(self):
        return self.t0 + (self.nt - 1) * self.dt

    @property
    def z_levels(self):
        return self.z0 - self.dz * np.arange(self.nz)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)


# per-component staggering: origin shift (in cells) along each axis and extra
# samples along the staggered axis.
_STAGGER = {
    "u": ((-0.5, 0.0, 0.0), (1, 0, 0)),
    "v": ((0.0, -0.5, 0.0), (0, 1, 0)),
    "w": ((0.0, 0.0, 0.5), (0, 0, 1)),  # z faces extend half a cell above z0
}


def component_axes(spec, comp):
    """Sample-coordinate description of one staggered component.

    Returns ((x_orig, nx), (y_orig, ny), (z_orig, nz), (t_orig, nt)) where the
    k-th z sample is z_orig - k*dz (z decreases with index).
    """
    (ox, oy, oz), (ex, ey, ez) = _STAGGER[comp]
    return (
        (spec.x0 + ox * spec.dx, spec.nx + ex),
        (spec.y0 + oy * spec.dy, spec.ny + ey),
        (spec.z0 + oz * spec.dz, spec.nz + ez),
        (spec.t0, spec.nt),
    )


@dataclass
class FlowGrid:
    """Immutable container for one staggered velocity field plus wet fractions."""

    spec: GridSpec
    u: np.ndarray  # (nx+1, ny, nz, nt)
    v: np.ndarray  # (nx, ny+1, nz, nt)
    w: np.ndarray  # (nx, ny, nz+1, nt)
    wet_fraction: np.ndarray  # (nx, ny, nz)

    def __post_init__(self):
        s = self.spec
        expect = {
            "u": (s.nx + 1, s.ny, s.nz, s.nt),
            "v": (s.nx, s.ny + 1, s.nz, s.nt),
            "w": (s.nx, s.ny, s.nz + 1, s.nt),
            "wet_fraction": (s.nx, s.ny, s.nz),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ConfigurationError(f"{name} has shape {arr.shape}, expected {shape}")
        wf = self.wet_fraction
        if np.nanmin(wf) < 0 or np.nanmax(wf) > 1:
            raise ConfigurationError("wet_fraction must lie in [0, 1]")

    def component(self, comp):
        return {"u": self.u, "v": self.v, "w": self.w}[comp]

    @cached_property
    def envelope(self):
        return navigable_envelope(self)


def _check_bounds(spec, x, y, z, t):
    if not (spec.x0 - _COINCIDENCE_EPS <= x <= spec.x_max + _COINCIDENCE_EPS):
        raise FlowDomainError("x", f"x={x} outside [{spec.x0}, {spec.x_max}]")
    if not (spec.y0 - _COINCIDENCE_EPS <= y <= spec.y_max + _COINCIDENCE_EPS):
        raise FlowDomainError("y", f"y={y} outside [{spec.y0}, {spec.y_max}]")
    z_hi = spec.z0 + 0.5 * spec.dz
    z_lo = spec.z0 - (spec.nz - 0.5) * spec.dz
    if not (z_lo - _COINCIDENCE_EPS <= z <= z_hi + _COINCIDENCE_EPS):
        raise FlowDomainError("z", f"z={z} outside [{z_lo}, {z_hi}]")
    if not (spec.t0 - _COINCIDENCE_EPS <= t <= spec.t_max + _COINCIDENCE_EPS):
        raise FlowDomainError("t", f"t={t} outside [{spec.t0}, {spec.t_max}]")


def _axis_cell(idx, n):
    """Clamp a fractional sample index and split into (cell, frac)."""
    if idx < 0.0:
        idx = 0.0
    elif idx > n - 1:
        idx = float(n - 1)
    i0 = int(idx)
    if i0 > n - 2:
        i0 = n - 2
    return i0, idx - i0


def interpolation_stencil(grid, comp, point, time):
    """16-point multilinear stencil of one component at one query.

    Returns (indices, weights) with indices an (16, 4) int array into the
    component array and weights summing to one.  Exposed for verification; the
    fast paths below inline the same arithmetic.
    """
    spec = grid.spec
    x, y, z = point
    (xo, nxc), (yo, nyc), (zo, nzc), (to, ntc) = component_axes(spec, comp)
    fx = (x - xo) / spec.dx
    fy = (y - yo) / spec.dy
    fz = (zo - z) / spec.dz
    ft = (time - to) / spec.dt
    cells = [_axis_cell(fx, nxc), _axis_cell(fy, nyc), _axis_cell(fz, nzc), _axis_cell(ft, ntc)]
    idx = np.empty((16, 4), dtype=np.int64)
    wts = np.empty(16)
    for m in range(16):
        w = 1.0
        for a in range(4):
            bit = (m >> a) & 1
            c, f = cells[a]
            idx[m, a] = c + bit
            w *= f if bit else 1.0 - f
        wts[m] = w
    return idx, wts


def _interp_component_scalar(arr, spec, comp, x, y, z, t):
    (xo, nxc), (yo, nyc), (zo, nzc), (to, ntc) = component_axes(spec, comp)
    i, fx = _axis_cell((x - xo) / spec.dx, nxc)
    j, fy = _axis_cell((y - yo) / spec.dy, nyc)
    k, fz = _axis_cell((zo - z) / spec.dz, nzc)
    n, ft = _axis_cell((t - to) / spec.dt, ntc)
    a = arr[i : i + 2, j : j + 2, k : k + 2, n : n + 2]
    c = a[0] * (1.0 - fx) + a[1] * fx
    c = c[0] * (1.0 - fy) + c[1] * fy
    c = c[0] * (1.0 - fz) + c[1] * fz
    return float(c[0] * (1.0 - ft) + c[1] * ft)


def interpolate_velocity(grid, point, time):
    """Multilinear (x, y, z, t) interpolation of each staggered component.

    Raises FlowDomainError (naming the axis) for queries outside the truncated
    horizontal hull, the time window, or the vertical sample range.
    """
    x, y, z = float(point[0]), float(point[1]), float(point[2])
    t = float(time)
    _check_bounds(grid.spec, x, y, z, t)
    return (
        _interp_component_scalar(grid.u, grid.spec, "u", x, y, z, t),
        _interp_component_scalar(grid.v, grid.spec, "v", x, y, z, t),
        _interp_component_scalar(grid.w, grid.spec, "w", x, y, z, t),
    )


def interpolate_velocity_many(grid, points, times):
    """Vectorized interpolation at many (point, time) queries.

    `points` is (n, 3), `times` is (n,).  Bounds are enforced collectively.
    """
    spec = grid.spec
    points = np.asarray(points, dtype=float)
    times = np.asarray(times, dtype=float)
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    for vals, lo, hi, axis in (
        (x, spec.x0, spec.x_max, "x"),
        (y, spec.y0, spec.y_max, "y"),
        (z, spec.z0 - (spec.nz - 0.5) * spec.dz, spec.z0 + 0.5 * spec.dz, "z"),
        (times, spec.t0, spec.t_max, "t"),
    ):
        if vals.size and (vals.min() < lo - _COINCIDENCE_EPS or vals.max() > hi + _COINCIDENCE_EPS):
            raise FlowDomainError(axis, f"{axis} query outside [{lo}, {hi}]")
    out = np.empty((len(points), 3))
    for col, comp in enumerate(("u", "v", "w")):
        arr = grid.component(comp)
        (xo, nxc), (yo, nyc), (zo, nzc), (to, ntc) = component_axes(spec, comp)
        fids = [
            np.clip((x - xo) / spec.dx, 0, nxc - 1),
            np.clip((y - yo) / spec.dy, 0, nyc - 1),
            np.clip((zo - z) / spec.dz, 0, nzc - 1),
            np.clip((times - to) / spec.dt, 0, ntc - 1),
        ]
        cells, fracs = [], []
        for fid, n in zip(fids, (nxc, nyc, nzc, ntc)):
            c = np.minimum(fid.astype(np.int64), n - 2)
            cells.append(c)
            fracs.append(fid - c)
        acc = np.zeros(len(points))
        for m in range(16):
            wgt = np.ones(len(points))
            idxs = []
            for a in range(4):
                bit = (m >> a) & 1
                idxs.append(cells[a] + bit)
                wgt = wgt * (fracs[a] if bit else 1.0 - fracs[a])
            acc += wgt * arr[idxs[0], idxs[1], idxs[2], idxs[3]]
        out[:, col] = acc
    return out


@dataclass
class NavigableEnvelope:
    """Per-column water-column bounds, bilinearly interpolable in x and y.

    Ceiling/floor are stored at cell centers; queries outside the truncated
    horizontal hull, or touching a non-navigable column, report non-navigable.
    """

    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int
    z_ceiling: np.ndarray  # (nx, ny), NaN where non-navigable
    z_floor: np.ndarray  # (nx, ny), NaN where non-navigable
    navigable: np.ndarray  # (nx, ny) bool

    @property
    def x_max(self):
        return self.x0 + (self.nx - 1) * self.dx

    @property
    def y_max(self):
        return self.y0 + (self.ny - 1) * self.dy

    def in_bounds(self, x, y):
        return (
            (x >= self.x0 - _COINCIDENCE_EPS)
            & (x <= self.x_max + _COINCIDENCE_EPS)
            & (y >= self.y0 - _COINCIDENCE_EPS)
            & (y <= self.y_max + _COINCIDENCE_EPS)
        )

    def _cell(self, x, y):
        fx = np.clip((np.asarray(x, dtype=float) - self.x0) / self.dx, 0, self.nx - 1)
        fy = np.clip((np.asarray(y, dtype=float) - self.y0) / self.dy, 0, self.ny - 1)
        cx = np.minimum(fx.astype(np.int64), self.nx - 2)
        cy = np.minimum(fy.astype(np.int64), self.ny - 2)
        return cx, cy, fx - cx, fy - cy

    def column_bounds_many(self, x, y):
        """Bilinear (floor, ceiling) at arrays of horizontal positions.

        NaN where out of bounds or where any supporting column is dry.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        cx, cy, rx, ry = self._cell(x, y)
        ok = self.in_bounds(x, y)
        ok &= (
            self.navigable[cx, cy]
            & self.navigable[cx + 1, cy]
            & self.navigable[cx, cy + 1]
            & self.navigable[cx + 1, cy + 1]
        )
        out_f = np.full(x.shape, np.nan)
        out_c = np.full(x.shape, np.nan)
        for arr, out in ((self.z_floor, out_f), (self.z_ceiling, out_c)):
            v00 = arr[cx, cy]
            v10 = arr[cx + 1, cy]
            v01 = arr[cx, cy + 1]
            v11 = arr[cx + 1, cy + 1]
            val = (
                v00 * (1 - rx) * (1 - ry)
                + v10 * rx * (1 - ry)
                + v01 * (1 - rx) * ry
                + v11 * rx * ry
            )
            out[ok] = val[ok]
        return out_f, out_c

    def column_bounds(self, x, y):
        """Scalar counterpart of column_bounds_many (same arithmetic order,
        no array overhead: this sits on the per-step hot path of rollouts)."""
        x = float(x)
        y = float(y)
        eps = _COINCIDENCE_EPS
        if not (self.x0 - eps <= x <= self.x_max + eps
                and self.y0 - eps <= y <= self.y_max + eps):
            return float("nan"), float("nan")
        fx = (x - self.x0) / self.dx
        fy = (y - self.y0) / self.dy
        fx = 0.0 if fx < 0 else (self.nx - 1 if fx > self.nx - 1 else fx)
        fy = 0.0 if fy < 0 else (self.ny - 1 if fy > self.ny - 1 else fy)
        cx = min(int(fx), self.nx - 2)
        cy = min(int(fy), self.ny - 2)
        nav = self.navigable
        if not (nav[cx, cy] and nav[cx + 1, cy] and nav[cx, cy + 1]
                and nav[cx + 1, cy + 1]):
            return float("nan"), float("nan")
        rx = fx - cx
        ry = fy - cy
        out = []
        for arr in (self.z_floor, self.z_ceiling):
            out.append(
                arr[cx, cy] * (1 - rx) * (1 - ry)
                + arr[cx + 1, cy] * rx * (1 - ry)
                + arr[cx, cy + 1] * (1 - rx) * ry
                + arr[cx + 1, cy + 1] * rx * ry
            )
        return float(out[0]), float(out[1])

    def is_navigable(self, x, y):
        f, _ = self.column_bounds(x, y)
        return f == f  # not NaN

    def contains(self, x, y, z):
        f, c = self.column_bounds(x, y)
        return np.isfinite(f) and f <= z <= c


def navigable_envelope(grid):
    """Column top/bottom elevations from wet fractions.

    A partially wet cell contributes `f*dz` of water attached to the wet side
    of the column: the topmost wet cell fills from its bottom face upward, the
    bottommost from its top face downward.  Fully dry columns, and columns
    whose reconstructed floor is not below their ceiling, are non-navigable.
    """
    spec = grid.spec
    wf = grid.wet_fraction
    wet = wf > 0
    any_wet = wet.any(axis=2)
    k_top = wet.argmax(axis=2)
    k_bot = spec.nz - 1 - wet[:, :, ::-1].argmax(axis=2)
    ii, jj = np.meshgrid(np.arange(spec.nx), np.arange(spec.ny), indexing="ij")
    f_top = wf[ii, jj, k_top]
    f_bot = wf[ii, jj, k_bot]
    bottom_face_top = spec.z0 - k_top * spec.dz - 0.5 * spec.dz
    top_face_bot = spec.z0 - k_bot * spec.dz + 0.5 * spec.dz
    ceil = np.minimum(bottom_face_top + f_top * spec.dz, 0.0)
    floor = top_face_bot - f_bot * spec.dz
    navigable = any_wet & (floor < ceil)
    ceil = np.where(navigable, ceil, np.nan)
    floor = np.where(navigable, floor, np.nan)
    return NavigableEnvelope(
        x0=spec.x0,
        y0=spec.y0,
        dx=spec.dx,
        dy=spec.dy,
        nx=spec.nx,
        ny=spec.ny,
        z_ceiling=ceil,
        z_floor=floor,
        navigable=navigable,
    )


@dataclass
class EmpiricalVelocityDistribution:
    """Equally weighted velocity samples standing in for P(v(x, y, z))."""

    samples: np.ndarray  # (n, 3)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3 or len(self.samples) == 0:
            raise ConfigurationError("samples must be a non-empty (n, 3) array")
        if not np.isfinite(self.samples).all():
            raise ConfigurationError("velocity samples must be finite")

    def __len__(self):
        return len(self.samples)


def time_subsample_indices(nt, subsample):
    """Evenly strided retained time indices; stride = round(1/subsample)."""
    if not 0 < subsample <= 1:
        raise ConfigurationError(f"subsample must be in (0, 1], got {subsample}")
    stride = max(1, round(1.0 / subsample))
    return np.arange(0, nt, stride)


def velocity_distribution_at(grid, point, subsample=1.0, envelope=None):
    """Empirical velocity distribution at a navigable point.

    One equally weighted sample per retained model time step.
    """
    env = envelope if envelope is not None else grid.envelope
    x, y, z = point
    if not (env.in_bounds(x, y) and env.contains(x, y, z)):
        raise FlowDomainError("x", f"point {point} is not navigable")
    idx = time_subsample_indices(grid.spec.nt, subsample)
    times = grid.spec.t0 + grid.spec.dt * idx
    pts = np.broadcast_to(np.asarray(point, dtype=float), (len(times), 3))
    return EmpiricalVelocityDistribution(interpolate_velocity_many(grid, pts, times))
