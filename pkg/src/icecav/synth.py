"""Synthetic ice-cavity flow fields.

Desk-scale stand-in for an ocean-model solution: a steady overturning
circulation (inflow in the lower half of the water column toward the
grounding zone at the high-x end, return flow near the ice ceiling toward
the inlet at x = 0) plus temporally correlated random eddy perturbations.

The eddy field is a sum of random plane waves whose phases random-walk in
time; the construction keeps the pointwise temporal velocity variance close
to the configured amplitude squared everywhere inside the water column.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError
from .flowfield import FlowGrid, GridSpec, component_axes

_MAX_EDDY_MODES = 18  # keeps |eddy| <= sqrt(2K) * amplitude <= 6 * amplitude


@dataclass(frozen=True)
class CavityParams:
    nx: int = 80
    ny: int = 40
    nz: int = 60
    nt: int = 720
    dx: float = 500.0
    dy: float = 500.0
    dz: float = 10.0
    dt: float = 3600.0
    ceiling_inlet: float = -100.0  # ice-draft elevation at the inlet (x = 0)
    ceiling_gz: float = -480.0  # ice-draft elevation at the grounding zone (x = Lx)
    floor_inlet: float = -600.0
    floor_gz: float = -600.0
    mean_speed: float = 0.15  # peak overturning speed, m/s
    eddy_amplitude: float = 0.02  # per-point temporal std of eddy velocity, m/s
    eddy_correlation_time: float = 18000.0  # seconds
    n_eddy_modes: int = 8
    # kept long relative to the grid spacing so that multilinear sampling of
    # the waves preserves the configured per-point variance
    eddy_wavelength_min: float = 6000.0
    eddy_wavelength_max: float = 12000.0
    eddy_wavelength_vertical: float = 400.0

    def __post_init__(self):
        if self.ceiling_inlet >= 0 or self.ceiling_gz >= 0:
            raise ConfigurationError("ice ceiling must be below the sea surface")
        if self.floor_inlet >= self.ceiling_inlet or self.floor_gz >= self.ceiling_gz:
            raise ConfigurationError("seafloor must be below the ice ceiling")
        if self.mean_speed < 0 or self.eddy_amplitude < 0:
            raise ConfigurationError("speeds must be non-negative")
        if not 1 <= self.n_eddy_modes <= _MAX_EDDY_MODES:
            raise ConfigurationError(f"n_eddy_modes must be in [1, {_MAX_EDDY_MODES}]")
        if self.eddy_correlation_time <= 0:
            raise ConfigurationError("eddy_correlation_time must be > 0")

    @property
    def spec(self):
        return GridSpec(
            nx=self.nx, ny=self.ny, nz=self.nz, nt=self.nt,
            dx=self.dx, dy=self.dy, dz=self.dz, dt=self.dt,
            x0=0.0, y0=0.0, z0=-0.5 * self.dz, t0=0.0,
        )

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def as_dict(self):
        return asdict(self)


def _profiles(params, x):
    """Ice ceiling and seafloor elevation at horizontal position(s) x."""
    lx = (params.nx - 1) * params.dx
    xi = np.clip(np.asarray(x, dtype=float) / lx, 0.0, 1.0)
    ceil = params.ceiling_inlet + (params.ceiling_gz - params.ceiling_inlet) * xi
    floor = params.floor_inlet + (params.floor_gz - params.floor_inlet) * xi
    return ceil, floor


def _overturning_u(params, x_samples, z_samples):
    """Mean along-cavity velocity on an (x, z) section, and in-water mask."""
    ceil, floor = _profiles(params, x_samples)
    z = np.asarray(z_samples)
    s = (ceil[:, None] - z[None, :]) / (ceil[:, None] - floor[:, None])
    mask = (s >= 0.0) & (s <= 1.0)
    u = np.where(mask, -params.mean_speed * np.cos(np.pi * s), 0.0)
    return u, mask


def _eddy_modes(params, rng, count):
    """Random plane-wave modes: wave vectors and spatial phases."""
    lam = rng.uniform(params.eddy_wavelength_min, params.eddy_wavelength_max, count)
    theta = rng.uniform(0, 2 * np.pi, count)
    kh = 2 * np.pi / lam
    kx = kh * np.cos(theta)
    ky = kh * np.sin(theta)
    kz = 2 * np.pi / params.eddy_wavelength_vertical * rng.choice([-1.0, 1.0], count)
    phase = rng.uniform(0, 2 * np.pi, count)
    return kx, ky, kz, phase


def _phase_walks(params, rng, count):
    """Brownian phases theta_k(t) with correlation time tau: (count, nt)."""
    sigma = np.sqrt(2.0 * params.dt / params.eddy_correlation_time)
    steps = rng.normal(0.0, sigma, size=(count, params.nt - 1))
    theta = np.zeros((count, params.nt))
    np.cumsum(steps, axis=1, out=theta[:, 1:])
    return theta


def _eddy_field(params, rng, shape, coords, mask):
    """Eddy velocity (shape + (nt,)) as float32, masked to the water column."""
    k = params.n_eddy_modes
    kx, ky, kz, phase = _eddy_modes(params, rng, k)
    theta = _phase_walks(params, rng, k)
    xg, yg, zg = coords  # broadcastable to `shape`
    n = int(np.prod(shape))
    basis = np.empty((n, 2 * k), dtype=np.float32)
    for m in range(k):
        arg = kx[m] * xg + ky[m] * yg + kz[m] * zg + phase[m]
        basis[:, m] = np.cos(arg).astype(np.float32).ravel()
        basis[:, k + m] = np.sin(arg).astype(np.float32).ravel()
    amp = params.eddy_amplitude * np.sqrt(2.0 / k)
    coeff = np.empty((2 * k, params.nt), dtype=np.float32)
    coeff[:k] = (amp * np.cos(theta)).astype(np.float32)
    coeff[k:] = (-amp * np.sin(theta)).astype(np.float32)
    field = basis @ coeff  # (n, nt), C-contiguous
    field = field.reshape(shape + (params.nt,))
    field *= mask[..., None]
    return field


def synthesize_cavity(params, seed):
    """Deterministic synthetic cavity flow grid for a given seed."""
    spec = params.spec
    rng = np.random.default_rng(seed)

    xc = spec.x0 + spec.dx * np.arange(spec.nx)
    zc = spec.z_levels

    # wet fraction: overlap of each cell with the [floor, ceiling] interval
    ceil_c, floor_c = _profiles(params, xc)
    top_face = zc + 0.5 * spec.dz
    bot_face = zc - 0.5 * spec.dz
    overlap = np.minimum(top_face[None, :], ceil_c[:, None]) - np.maximum(
        bot_face[None, :], floor_c[:, None]
    )
    wf_xz = np.clip(overlap / spec.dz, 0.0, 1.0)
    wet_fraction = np.broadcast_to(wf_xz[:, None, :], (spec.nx, spec.ny, spec.nz)).copy()

    # mean along-cavity flow on u faces
    (xo_u, nxu), _, (zo_u, nzu), _ = component_axes(spec, "u")
    xu = xo_u + spec.dx * np.arange(nxu)
    u_xz, umask_xz = _overturning_u(params, xu, zc)

    def grid_coords(comp):
        (xo, nxc), (yo, nyc), (zo, nzc), _ = component_axes(spec, comp)
        xg = (xo + spec.dx * np.arange(nxc))[:, None, None]
        yg = (yo + spec.dy * np.arange(nyc))[None, :, None]
        zg = (zo - spec.dz * np.arange(nzc))[None, None, :]
        return (nxc, nyc, nzc), (xg, yg, zg)

    ushape, ucoords = grid_coords("u")
    umask = np.broadcast_to(umask_xz[:, None, :], ushape).astype(np.float32).copy()
    u = _eddy_field(params, rng, ushape, ucoords, umask)
    u += (umask_xz[:, None, :] * u_xz[:, None, :]).astype(np.float32)[..., None]

    vshape, vcoords = grid_coords("v")
    _, vmask_xz = _overturning_u(params, xc, zc)
    vmask = np.broadcast_to(vmask_xz[:, None, :], vshape).astype(np.float32).copy()
    v = _eddy_field(params, rng, vshape, vcoords, vmask)

    # vertical velocity closing the mean overturning: integrate continuity
    # upward from the seafloor (w = 0 at the bottom face); no eddy component.
    du_dx = (u_xz[1:, :] - u_xz[:-1, :]) / spec.dx  # cell-centered (nx, nz)
    w_xz = np.zeros((spec.nx, spec.nz + 1), dtype=np.float32)
    for kf in range(spec.nz - 1, -1, -1):
        w_xz[:, kf] = w_xz[:, kf + 1] - du_dx[:, kf] * spec.dz
    wshape, _ = grid_coords("w")
    w = np.broadcast_to(
        w_xz[:, None, :, None], (spec.nx, spec.ny, spec.nz + 1, spec.nt)
    )

    return FlowGrid(spec=spec, u=u, v=v, w=w, wet_fraction=wet_fraction)
