"""Cross-checks of the production sweeps against the slow reference solvers."""

import numpy as np
import pytest

from crowd_mfg.fields import SpaceTimeDensity
from crowd_mfg.grid import build_grid
from crowd_mfg.hjb import ControlSet, HJBSolver, build_target_schedule, sl_backward_sweep
from crowd_mfg.interaction import (
    InteractionParams,
    build_stencils,
    interaction_velocity,
    project_boundary_velocity,
)
from crowd_mfg.models import (
    ConstantTerminalCost,
    CostConfig,
    CostMode,
    DistanceTerminalCost,
    Exit,
    LinearX1RunningCost,
    Side,
    TargetConfig,
    TargetSegment,
)
from crowd_mfg.oracle import OracleGrid, brute_force_value, fast_sweep_distance
from crowd_mfg.utils import ConfigurationError

FREE = InteractionParams(c_rep=0.0, r0=0.01, r=0.06)


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    n1, n2 = (int(v) for v in rng.integers(4, 16, size=2))
    nT = int(rng.integers(2, 41))
    size = tuple(float(v) for v in rng.uniform(0.5, 2.0, size=2))
    g = build_grid(size, n1, n2, T=float(rng.uniform(0.1, 1.0)), nT=nT)
    running = LinearX1RunningCost(c0=float(rng.uniform(0, 2)), c1=float(rng.uniform(-1, 1)))
    if rng.random() < 0.5:
        terminal = DistanceTerminalCost(center=(float(rng.uniform(0, size[0])), float(rng.uniform(0, size[1]))))
    else:
        terminal = ConstantTerminalCost(value=float(rng.uniform(0, 1)))
    sigma = 0.0 if rng.random() < 0.5 else float(rng.uniform(0, 0.2)) * g.cell_area / g.dt
    return g, CostConfig(mode=CostMode.FINITE_HORIZON, running=running, terminal=terminal), sigma


class TestBruteForceValue:
    """The vectorised sweep against plain dynamic programming."""

    @pytest.mark.parametrize("seed", range(20))
    def test_decoupled_instances(self, seed):
        """Random decoupled costs with and without diffusion match to 1e-12."""
        g, costs, sigma = _random_instance(seed)
        controls = ControlSet(8)
        stencils = build_stencils(g, FREE, controls.directions)
        rho = SpaceTimeDensity(np.zeros((g.nT + 1,) + g.shape))
        phi = sl_backward_sweep(rho, costs, controls, g, stencils, FREE, sigma=sigma)

        def velocity(i, j, n, k):
            a = controls.directions[k - 1]
            return float(a[0]), float(a[1])

        expected = brute_force_value(
            running=lambda x, y, n: float(costs.running.evaluate(x, y, 0.0)),
            terminal=lambda x, y: float(costs.terminal.evaluate(x, y)),
            K=controls.K,
            velocity=velocity,
            og=OracleGrid.from_grid(g),
            wall_value=phi.wall_value,
            sigma=sigma,
        )
        np.testing.assert_allclose(phi.values, expected, rtol=0, atol=1e-12)

    def test_with_repulsion(self):
        """Density-dependent velocities, read cell by cell."""
        g = build_grid((1.0, 1.0), 12, 12, T=0.3, nT=12)
        controls = ControlSet(8)
        params = InteractionParams(c_rep=2.0, r0=0.01, r=0.25)
        stencils = build_stencils(g, params, controls.directions)
        rho = SpaceTimeDensity(0.5 * np.random.default_rng(4).random((g.nT + 1,) + g.shape))
        costs = CostConfig(
            mode=CostMode.FINITE_HORIZON,
            running=LinearX1RunningCost(c0=1.0, c1=0.5),
            terminal=DistanceTerminalCost(center=(0.2, 0.8)),
        )
        phi = sl_backward_sweep(rho, costs, controls, g, stencils, params)

        def velocity(i, j, n, k):
            v_int = interaction_velocity(rho.values[n], i, j, k, stencils, params)
            v = project_boundary_velocity(controls.direction(k) + v_int, i, j, g)
            return float(v[0]), float(v[1])

        expected = brute_force_value(
            running=lambda x, y, n: float(costs.running.evaluate(x, y, 0.0)),
            terminal=lambda x, y: float(costs.terminal.evaluate(x, y)),
            K=controls.K,
            velocity=velocity,
            og=OracleGrid.from_grid(g),
            wall_value=phi.wall_value,
        )
        np.testing.assert_allclose(phi.values, expected, rtol=0, atol=1e-12)

    def test_minimum_time(self):
        """A bottom door in a closed room matches the dynamic-programming value."""
        g = build_grid((1.0, 1.0), 10, 10, T=1.0, nT=20)
        controls = ControlSet(16)
        stencils = build_stencils(g, FREE, controls.directions)
        target = TargetConfig(
            exits=[Exit(name="door", side=Side.RIGHT, center=0.3, width=0.2)],
            segments=[TargetSegment(start=0.0, end=1.0, exits=["door"])],
        )
        schedule = build_target_schedule(target, g)
        solver = HJBSolver(g, CostConfig(mode=CostMode.MINIMUM_TIME), controls, stencils, FREE, schedule=schedule)
        phi, _ = solver.solve(SpaceTimeDensity(np.zeros((g.nT + 1,) + g.shape)))
        cells = np.argwhere(schedule.openings_at(0.0).cells(g))

        def velocity(i, j, n, k):
            a = controls.directions[k - 1]
            return float(a[0]), float(a[1])

        expected = brute_force_value(
            running=lambda x, y, n: 1.0,
            terminal=lambda x, y: 0.0,
            K=controls.K,
            velocity=velocity,
            og=OracleGrid.from_grid(g),
            wall_value=phi.wall_value,
            targets=[tuple(c) for c in cells],
        )
        np.testing.assert_allclose(phi.values, expected, rtol=0, atol=1e-12)


class TestEikonalSanity:
    """The minimum-time value against an independent distance solver."""
    def test_minimum_time_tracks_the_distance(self):
        """phi at t = 0 stays within two cells of the arrival-time map on every interior cell."""
        g = build_grid((1.0, 1.0), 20, 20, T=1.5, nT=30)
        controls = ControlSet(32)
        stencils = build_stencils(g, FREE, controls.directions)
        target = TargetConfig(
            exits=[Exit(name="door", side=Side.BOTTOM, center=0.5, width=0.2)],
            segments=[TargetSegment(start=0.0, end=1.5, exits=["door"])],
        )
        schedule = build_target_schedule(target, g)
        solver = HJBSolver(g, CostConfig(mode=CostMode.MINIMUM_TIME), controls, stencils, FREE, schedule=schedule)
        phi, _ = solver.solve(SpaceTimeDensity(np.zeros((g.nT + 1,) + g.shape)))

        door = schedule.openings_at(0.0).cells(g)
        distance = fast_sweep_distance(
            [tuple(c) for c in np.argwhere(door)], OracleGrid.from_grid(g), walls=g.boundary_mask()
        )
        check = ~g.boundary_mask()
        np.testing.assert_allclose(phi.values[0][check], distance[check], atol=2 * g.dx1)


class TestFastSweepDistance:
    """Properties of the Godunov fast sweeping solver."""

    def test_axis_distances_are_exact(self):
        """Along the grid axes the distance is exact."""
        og = OracleGrid(n1=11, n2=11, dx1=0.1, dx2=0.1, dt=0.1, nT=1)
        d = fast_sweep_distance([(5, 5)], og)
        for m in range(6):
            assert d[5 + m, 5] == pytest.approx(0.1 * m)
            assert d[5, 5 - m] == pytest.approx(0.1 * m)

    def test_between_euclid_and_manhattan(self):
        """Distances lie between the straight-line and the taxicab ones."""
        og = OracleGrid(n1=9, n2=7, dx1=0.1, dx2=0.2, dt=0.1, nT=1)
        d = fast_sweep_distance([(0, 0)], og)
        i, j = np.meshgrid(np.arange(9), np.arange(7), indexing="ij")
        euclid = np.hypot(0.1 * i, 0.2 * j)
        manhattan = 0.1 * i + 0.2 * j
        assert np.all(d >= euclid - 1e-12)
        assert np.all(d <= manhattan + 1e-12)

    def test_symmetric_sources(self):
        """Two opposite corner sources give a point-symmetric map."""
        og = OracleGrid(n1=10, n2=10, dx1=0.1, dx2=0.1, dt=0.1, nT=1)
        d = fast_sweep_distance([(0, 0), (9, 9)], og)
        np.testing.assert_allclose(d, d[::-1, ::-1], atol=1e-12)

    def test_walls_are_never_reached(self):
        """A full wall cuts the room in two."""
        og = OracleGrid(n1=6, n2=6, dx1=0.1, dx2=0.1, dt=0.1, nT=1)
        walls = np.zeros((6, 6), dtype=bool)
        walls[3, :] = True
        d = fast_sweep_distance([(0, 0)], og, walls=walls)
        assert np.all(np.isinf(d[3:]))

    def test_needs_a_target(self):
        """An empty source list is rejected."""
        og = OracleGrid(n1=4, n2=4, dx1=0.1, dx2=0.1, dt=0.1, nT=1)
        with pytest.raises(ConfigurationError):
            fast_sweep_distance([], og)


class TestOracleGrid:
    """Test the brute-force grid limits."""
    @pytest.mark.parametrize("n1,n2,nT", [(26, 5, 5), (5, 26, 5), (5, 5, 61), (0, 5, 5)])
    def test_size_caps(self, n1, n2, nT):
        """Grids too large for brute force are refused."""
        with pytest.raises(ConfigurationError):
            OracleGrid(n1=n1, n2=n2, dx1=0.1, dx2=0.1, dt=0.1, nT=nT)

    def test_from_grid(self, small_grid):
        """The brute-force grid shares the solver's cell centres."""
        og = OracleGrid.from_grid(small_grid)
        assert og.centre(2, 3) == pytest.approx(tuple(small_grid.center(2, 3)))
