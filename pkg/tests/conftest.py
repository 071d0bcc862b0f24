import numpy as np
import pytest

from icecav.flowfield import FlowGrid, GridSpec
from icecav.mdp import MdpConfig, TerminalRegion, build_mdp
from icecav.synth import CavityParams, synthesize_cavity
from icecav import solver as sv


def uniform_grid(nx=6, ny=5, nz=8, nt=4, value=(0.0, 0.0, 0.0), wet=1.0, **spec_kw):
    """Fully wet grid with spatially and temporally uniform velocities."""
    kw = dict(dx=100.0, dy=100.0, dz=10.0, dt=3600.0, x0=0.0, y0=0.0, z0=-5.0, t0=0.0)
    kw.update(spec_kw)
    spec = GridSpec(nx=nx, ny=ny, nz=nz, nt=nt, **kw)
    return FlowGrid(
        spec=spec,
        u=np.full((nx + 1, ny, nz, nt), value[0], dtype=np.float32),
        v=np.full((nx, ny + 1, nz, nt), value[1], dtype=np.float32),
        w=np.full((nx, ny, nz + 1, nt), value[2], dtype=np.float32),
        wet_fraction=np.full((nx, ny, nz), wet),
    )


def chain_mdp(gamma=0.7, reward=50.0):
    """Uniform 0.125 m/s flow; one step moves exactly one 450 m lattice cell.

    Columns with x >= 2000 are terminal, so values follow the closed-form
    chain V(i) = e_h + gamma * V(i+1) down to the terminal reward.
    """
    grid = uniform_grid(nx=36, ny=5, nz=60, dx=100.0, value=(0.125, 0.0, 0.0))
    term = TerminalRegion(
        "gz", reward, [(2000, -1000), (5000, -1000), (5000, 1000), (2000, 1000)])
    mdp = build_mdp(grid, MdpConfig(gamma=gamma), [term], subsample=1.0)
    lat = sv.build_lattice(mdp, (450.0, 200.0, 25.0))
    return grid, mdp, lat


def solve(grid, mdp, lat, tolerance=1e-9, subsample=1.0, max_iters=2000):
    backed = np.flatnonzero(lat.kind.reshape(-1) == sv.KIND_REGULAR)
    vx, vy = sv.lattice_distributions(grid, lat, backed, subsample)
    op = sv.build_backup_operator(mdp, lat, backed, vx, vy)
    vf, policy = sv.value_iteration(op, tolerance=tolerance, max_iters=max_iters)
    return op, vf, policy


TINY_PARAMS = CavityParams(nx=24, ny=12, nz=60, nt=96)


@pytest.fixture(scope="session")
def tiny_grid():
    return synthesize_cavity(TINY_PARAMS, seed=1)


def tiny_terminals():
    return [
        TerminalRegion("grounding_zone", 10000.0,
                       [(10200, 1000), (12000, 1000), (12000, 4500), (10200, 4500)]),
        TerminalRegion("swept_to_sea", 0.0,
                       [(-1000, -1000), (150, -1000), (150, 7000), (-1000, 7000)]),
    ]


@pytest.fixture(scope="session")
def tiny_mdp(tiny_grid):
    return build_mdp(tiny_grid, MdpConfig(), tiny_terminals(), subsample=0.25)


@pytest.fixture(scope="session")
def tiny_solution(tiny_grid, tiny_mdp):
    lat = sv.build_lattice(tiny_mdp, (840.0, 840.0, 25.0))
    backed = np.flatnonzero(lat.kind.reshape(-1) == sv.KIND_REGULAR)
    vx, vy = sv.lattice_distributions(tiny_grid, lat, backed, 0.25)
    op = sv.build_backup_operator(tiny_mdp, lat, backed, vx, vy)
    vf, policy = sv.value_iteration(op, tolerance=1.0, max_iters=3000)
    q_table = sv.q_table_from_values(op, vf.values)
    return lat, op, vf, policy, q_table
