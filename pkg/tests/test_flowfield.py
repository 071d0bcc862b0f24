import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icecav.errors import ConfigurationError, FlowDomainError
from icecav.flowfield import (
    EmpiricalVelocityDistribution,
    GridSpec,
    component_axes,
    interpolate_velocity,
    interpolate_velocity_many,
    interpolation_stencil,
    navigable_envelope,
    time_subsample_indices,
    velocity_distribution_at,
)
from icecav.synth import CavityParams, synthesize_cavity

from conftest import uniform_grid


class TestGridSpec:
    def test_counts_below_two_rejected(self):
        with pytest.raises(ConfigurationError):
            GridSpec(nx=1, ny=5, nz=8, nt=4, dx=100, dy=100, dz=10, dt=3600,
                     x0=0, y0=0, z0=-5, t0=0)

    def test_nonpositive_spacing_rejected(self):
        with pytest.raises(ConfigurationError):
            GridSpec(nx=4, ny=5, nz=8, nt=4, dx=-1, dy=100, dz=10, dt=3600,
                     x0=0, y0=0, z0=-5, t0=0)

    def test_z_levels_strictly_decreasing(self):
        spec = uniform_grid().spec
        assert np.all(np.diff(spec.z_levels) < 0)
        assert spec.z_levels[0] == spec.z0


class TestInterpolateVelocity:
    def test_uniform_field_returns_constant(self):
        grid = uniform_grid(value=(0.1, 0.0, 0.0))
        v = interpolate_velocity(grid, (250.0, 200.0, -40.0), 5000.0)
        assert v == pytest.approx((0.1, 0.0, 0.0), abs=1e-7)

    def test_exact_at_u_face_sample(self):
        grid = uniform_grid(value=(0.0, 0.0, 0.0))
        rng = np.random.default_rng(0)
        grid.u[:] = rng.normal(size=grid.u.shape).astype(np.float32)
        (xo, _), (yo, _), (zo, _), (to, _) = component_axes(grid.spec, "u")
        # u samples sit on x-faces: x0 - dx/2 + i*dx, cell-centered in y,z
        point = (xo + 2 * grid.spec.dx, yo + 3 * grid.spec.dy, zo - 4 * grid.spec.dz)
        t = to + 1 * grid.spec.dt
        vx, vy, vz = interpolate_velocity(grid, point, t)
        assert vx == pytest.approx(float(grid.u[2, 3, 4, 1]), abs=1e-9)
        assert vy == 0.0 and vz == 0.0

    def test_linear_field_at_midpoint_matches_closed_form(self):
        # independent oracle: u(x) = a + b*x evaluated directly
        a, b = 0.02, 3e-5
        grid = uniform_grid()
        (xo, nxu), _, _, _ = component_axes(grid.spec, "u")
        xs = xo + grid.spec.dx * np.arange(nxu)
        grid.u[:] = (a + b * xs)[:, None, None, None].astype(np.float32)
        q = (xs[2] + grid.spec.dx / 2, 150.0, -45.0)
        t = grid.spec.t0 + 1.5 * grid.spec.dt
        vx = interpolate_velocity(grid, q, t)[0]
        assert vx == pytest.approx(a + b * q[0], abs=1e-6)

    @pytest.mark.parametrize("point,t,axis", [
        ((-10_000.0, 200.0, -40.0), 5000.0, "x"),
        ((250.0, 10_000.0, -40.0), 5000.0, "y"),
        ((250.0, 200.0, -5000.0), 5000.0, "z"),
        ((250.0, 200.0, -40.0), 1e9, "t"),
    ])
    def test_out_of_bounds_names_axis(self, point, t, axis):
        grid = uniform_grid()
        with pytest.raises(FlowDomainError) as err:
            interpolate_velocity(grid, point, t)
        assert err.value.axis == axis

    @given(
        fx=st.floats(0.05, 0.95), fy=st.floats(0.05, 0.95),
        fz=st.floats(0.05, 0.95), ft=st.floats(0.0, 1.0),
        comp=st.sampled_from(["u", "v", "w"]),
    )
    @settings(max_examples=80, deadline=None)
    def test_stencil_weights_convex(self, fx, fy, fz, ft, comp):
        grid = uniform_grid()
        spec = grid.spec
        point = (fx * (spec.nx - 1) * spec.dx, fy * (spec.ny - 1) * spec.dy,
                 spec.z0 - fz * (spec.nz - 1) * spec.dz)
        t = spec.t0 + ft * (spec.nt - 1) * spec.dt
        idx, wts = interpolation_stencil(grid, comp, point, t)
        assert idx.shape == (16, 4) and wts.shape == (16,)
        assert np.all(wts >= 0)
        assert abs(wts.sum() - 1.0) < 1e-12

    def test_many_matches_scalar(self):
        grid = uniform_grid()
        rng = np.random.default_rng(3)
        grid.u[:] = rng.normal(size=grid.u.shape).astype(np.float32)
        grid.v[:] = rng.normal(size=grid.v.shape).astype(np.float32)
        pts = np.column_stack([rng.uniform(50, 450, 20), rng.uniform(50, 350, 20),
                               rng.uniform(-60, -10, 20)])
        ts = rng.uniform(0, 3 * 3600, 20)
        got = interpolate_velocity_many(grid, pts, ts)
        for i in range(20):
            # accumulation order differs between the two paths; float32 data
            assert got[i] == pytest.approx(
                interpolate_velocity(grid, tuple(pts[i]), ts[i]), abs=1e-6)


class TestNavigableEnvelope:
    def _column_grid(self, wet_col):
        """Grid whose every column has the given per-level wet fractions."""
        nz = len(wet_col)
        grid = uniform_grid(nz=nz, z0=-5.0)
        grid.wet_fraction[:] = np.asarray(wet_col)[None, None, :]
        return grid

    def test_fully_wet_block(self):
        # levels at -5, -15, ..., z0=-5, dz=10; wet levels 10..49 span
        # faces -100 (top of level 10 cell... top face = z_level + dz/2)
        wet = np.zeros(60)
        wet[10:50] = 1.0
        grid = self._column_grid(wet)
        env = navigable_envelope(grid)
        floor, ceil = env.column_bounds(250.0, 200.0)
        assert ceil == pytest.approx(-100.0)
        assert floor == pytest.approx(-500.0)

    def test_all_dry_column_non_navigable(self):
        grid = self._column_grid(np.zeros(8))
        env = navigable_envelope(grid)
        assert not env.is_navigable(250.0, 200.0)

    def test_partial_top_cell_geometric_oracle(self):
        wet = np.zeros(10)
        wet[3] = 0.5
        wet[4:8] = 1.0
        grid = self._column_grid(wet)
        env = navigable_envelope(grid)
        floor, ceil = env.column_bounds(250.0, 200.0)
        # oracle: the navigable interval must hold exactly the column's water
        volume = float(np.sum(wet) * grid.spec.dz)
        assert ceil - floor == pytest.approx(volume)
        # half-wet top cell: ceiling sits half a cell above that cell's bottom face
        bottom_face_of_top_cell = grid.spec.z_levels[3] - grid.spec.dz / 2
        assert ceil == pytest.approx(bottom_face_of_top_cell + 0.5 * grid.spec.dz)

    def test_outside_truncated_bounds_non_navigable(self):
        grid = uniform_grid()
        env = navigable_envelope(grid)
        assert not env.is_navigable(-1.0, 200.0)
        assert not env.is_navigable(env.x_max + 1.0, 200.0)

    @given(
        profile=st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6),
        k=st.integers(0, 5), bump=st.floats(0.05, 1.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_wet_fraction(self, profile, k, bump):
        wet = np.array(profile)
        grid = self._column_grid(wet)
        env1 = navigable_envelope(grid)
        wet2 = wet.copy()
        wet2[k] = min(1.0, wet2[k] + bump)
        env2 = navigable_envelope(self._column_grid(wet2))
        f1, c1 = env1.column_bounds(250.0, 200.0)
        f2, c2 = env2.column_bounds(250.0, 200.0)
        if np.isfinite(f1):
            assert np.isfinite(f2)
            assert c2 >= c1 - 1e-9
            assert f2 <= f1 + 1e-9


class TestVelocityDistribution:
    def test_subsample_one_keeps_every_step(self):
        grid = uniform_grid(nt=10)
        dist = velocity_distribution_at(grid, (250.0, 200.0, -40.0), 1.0)
        assert len(dist) == 10

    def test_subsample_fifth_strides_by_five(self):
        assert list(time_subsample_indices(10, 0.2)) == [0, 5]
        grid = uniform_grid(nt=10)
        dist = velocity_distribution_at(grid, (250.0, 200.0, -40.0), 0.2)
        assert len(dist) == 2

    def test_time_constant_field_gives_identical_samples(self):
        grid = uniform_grid(value=(0.07, -0.02, 0.0), nt=6)
        dist = velocity_distribution_at(grid, (310.0, 170.0, -33.0), 1.0)
        ref = interpolate_velocity(grid, (310.0, 170.0, -33.0), grid.spec.t0)
        assert np.allclose(dist.samples, np.asarray(ref)[None, :], atol=1e-9)
        assert np.all(np.var(dist.samples, axis=0) == 0.0)

    def test_non_navigable_point_rejected(self):
        grid = uniform_grid(wet=0.0)
        with pytest.raises(FlowDomainError):
            velocity_distribution_at(grid, (250.0, 200.0, -40.0), 1.0)

    def test_distribution_requires_samples(self):
        with pytest.raises(ConfigurationError):
            EmpiricalVelocityDistribution(samples=np.empty((0, 3)))


class TestSynthesizeCavity:
    def test_zero_eddy_is_time_constant_with_inflow_at_depth(self):
        params = CavityParams(nx=24, ny=8, nz=60, nt=8, eddy_amplitude=0.0)
        grid = synthesize_cavity(params, seed=0)
        assert np.all(grid.u[..., 0] == grid.u[..., 1])
        # mid-cavity, lower water column: flow toward the grounding zone (+x)
        env = navigable_envelope(grid)
        x, y = 6000.0, 1750.0
        floor, ceil = env.column_bounds(x, y)
        vx = interpolate_velocity(grid, (x, y, floor + 5.0), 0.0)[0]
        assert vx > 0.05

    def test_same_seed_bit_identical(self):
        params = CavityParams(nx=16, ny=8, nz=60, nt=12)
        g1 = synthesize_cavity(params, seed=9)
        g2 = synthesize_cavity(params, seed=9)
        assert np.array_equal(g1.u, g2.u)
        assert np.array_equal(g1.v, g2.v)
        assert np.array_equal(g1.w, g2.w)
        assert np.array_equal(g1.wet_fraction, g2.wet_fraction)

    def test_eddy_variance_tracks_amplitude(self):
        # sample-variance oracle, measured on the raw samples over all steps
        amp = 0.05
        params = CavityParams(nx=24, ny=12, nz=60, nt=720, mean_speed=0.0,
                              eddy_amplitude=amp, eddy_correlation_time=4 * 3600.0)
        grid = synthesize_cavity(params, seed=3)
        wet_all = np.all(np.abs(grid.u) > 0, axis=3)
        rng = np.random.default_rng(0)
        candidates = np.argwhere(wet_all)
        picks = candidates[rng.choice(len(candidates), 12, replace=False)]
        for i, j, k in picks:
            var = float(np.var(grid.u[i, j, k, :]))
            assert abs(var - amp ** 2) <= 0.2 * amp ** 2, (i, j, k, var)

    def test_speed_bound(self):
        params = CavityParams(nx=16, ny=8, nz=60, nt=24)
        grid = synthesize_cavity(params, seed=5)
        bound = params.mean_speed + 6 * params.eddy_amplitude
        for arr in (grid.u, grid.v, grid.w):
            assert np.all(np.isfinite(arr))
        speed = np.sqrt(
            grid.u[:-1, :, :, :].astype(float) ** 2
            + grid.v[:, :-1, :, :].astype(float) ** 2
            + grid.w[:, :, :-1, :].astype(float) ** 2
        )
        assert speed.max() <= bound + 1e-6

    def test_floor_above_ceiling_rejected(self):
        with pytest.raises(ConfigurationError):
            CavityParams(floor_inlet=-50.0)
