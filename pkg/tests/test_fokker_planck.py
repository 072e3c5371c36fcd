"""Tests for the push-forward density step."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from crowd_mfg.fields import DensityField
from crowd_mfg.fokker_planck import (
    absorb_target_mass,
    check_diffusion_positivity,
    gamma_weights,
    laplacian_zero_flux,
    push_forward_step,
)
from crowd_mfg.grid import build_grid
from crowd_mfg.hjb import ControlSet
from crowd_mfg.interaction import InteractionParams, Openings, build_stencils
from crowd_mfg.utils import CFLViolation, ConfigurationError

EAST = 32  # a = (1, 0) for K = 32
NORTH = 8


def _free(g, K=32):
    controls = ControlSet(K)
    params = InteractionParams(c_rep=0.0, r0=0.01, r=0.06)
    return controls.directions, build_stencils(g, params, controls.directions), params


class TestGammaWeights:
    """Test the 3x3 splitting weights."""

    def test_zero_displacement(self, unit_grid):
        """No displacement keeps all the mass in the centre cell."""
        w = gamma_weights((0.0, 0.0), unit_grid)
        expected = np.zeros((3, 3))
        expected[1, 1] = 1.0
        np.testing.assert_array_equal(w, expected)

    def test_half_cell_diagonal(self, unit_grid):
        """Half a cell up and right splits evenly over four cells."""
        w = gamma_weights((0.01, 0.01), unit_grid)
        for idx in [(1, 1), (2, 1), (1, 2), (2, 2)]:
            assert w[idx] == pytest.approx(0.25)
        assert w.sum() == pytest.approx(1.0)

    def test_leftward(self, unit_grid):
        """A quarter cell to the left sends a quarter of the mass left."""
        w = gamma_weights((-0.005, 0.0), unit_grid)
        assert w[0, 1] == pytest.approx(0.25)
        assert w[1, 1] == pytest.approx(0.75)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=-0.02, max_value=0.02), st.floats(min_value=-0.02, max_value=0.02))
    def test_partition_of_unity(self, x1, x2):
        """Weights are nonnegative and sum to one for any sub-cell displacement."""
        g = build_grid((1.0, 1.0), 50, 50, T=1.0, nT=200)
        w = gamma_weights((x1, x2), g)
        assert w.min() >= 0.0
        assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_more_than_one_cell(self, unit_grid):
        """Displacements past one cell are a CFL violation."""
        with pytest.raises(CFLViolation):
            gamma_weights((0.03, 0.0), unit_grid)


class TestPushForwardStep:
    """Test one push-forward step."""

    def test_standing_still_is_identity(self):
        """A vanishing time step leaves the crowd where it is."""
        g = build_grid((1.0, 1.0), 10, 10, T=1e-30, nT=1)
        controls, stencils, params = _free(g)
        rho = np.zeros(g.shape)
        rho[3:6, 4:7] = 2.0
        out, report = push_forward_step(DensityField(rho), np.full(g.shape, EAST), g, controls, stencils, params)
        np.testing.assert_allclose(out.values, rho, rtol=1e-12, atol=1e-12)
        assert report.mass_evacuated == 0.0

    def test_zero_velocity_is_identity(self):
        """A crowd pressed into a closed wall has V = 0 and does not move."""
        g = build_grid((1.0, 1.0), 10, 10, T=1.0, nT=10)
        controls, stencils, params = _free(g)
        rho = np.zeros(g.shape)
        rho[0, 2:8] = 1.5
        west = 16
        out, report = push_forward_step(DensityField(rho), np.full(g.shape, west), g, controls, stencils, params)
        np.testing.assert_allclose(out.values, rho, rtol=1e-12, atol=1e-12)
        assert report.mass_evacuated == 0.0

    def test_one_cell_shift(self):
        """With dt = dx and a = (1, 0), mass moves exactly one cell right."""
        g = build_grid((1.0, 1.0), 10, 10, T=1.0, nT=10)
        controls, stencils, params = _free(g)
        rho = np.zeros(g.shape)
        rho[4, 5] = 3.0
        out, _ = push_forward_step(DensityField(rho), np.full(g.shape, EAST), g, controls, stencils, params)
        expected = np.zeros(g.shape)
        expected[5, 5] = 3.0
        np.testing.assert_allclose(out.values, expected, atol=1e-12)

    def test_half_cell_shift(self):
        """dt = dx / 2 splits the mass between two cells."""
        g = build_grid((1.0, 1.0), 10, 10, T=0.5, nT=10)
        controls, stencils, params = _free(g)
        rho = np.zeros(g.shape)
        rho[4, 5] = 2.0
        out, _ = push_forward_step(DensityField(rho), np.full(g.shape, NORTH), g, controls, stencils, params)
        assert out.values[4, 5] == pytest.approx(1.0)
        assert out.values[4, 6] == pytest.approx(1.0)

    def test_wall_stops_the_crowd(self):
        """Against a closed wall the outward component is projected away."""
        g = build_grid((1.0, 1.0), 10, 10, T=1.0, nT=10)
        controls, stencils, params = _free(g)
        rho = np.zeros(g.shape)
        rho[9, 2] = 1.0
        out, report = push_forward_step(DensityField(rho), np.full(g.shape, EAST), g, controls, stencils, params)
        assert out.values[9, 2] == pytest.approx(1.0)
        assert report.mass_evacuated == 0.0

    def test_exit_lets_mass_out(self):
        """An open cell on the right wall lets the crowd walk out."""
        g = build_grid((1.0, 1.0), 10, 10, T=1.0, nT=10)
        controls, stencils, params = _free(g)
        openings = Openings.closed(g)
        openings.right[2] = True
        rho = np.zeros(g.shape)
        rho[9, 2] = 1.0
        out, report = push_forward_step(
            DensityField(rho), np.full(g.shape, EAST), g, controls, stencils, params, openings=openings
        )
        assert out.values.sum() == pytest.approx(0.0, abs=1e-12)
        assert report.mass_evacuated == pytest.approx(g.cell_area)
        assert report.evacuated_by_cell[9, 2] == pytest.approx(g.cell_area)

    def test_constant_density_under_diffusion(self, unit_grid):
        """A flat field has zero zero-flux Laplacian."""
        controls, stencils, params = _free(unit_grid)
        rho = np.full(unit_grid.shape, 0.4)
        g = build_grid((1.0, 1.0), 50, 50, T=1e-30, nT=1)
        out, _ = push_forward_step(
            DensityField(rho), np.ones(g.shape, dtype=int), g, controls, stencils, params, sigma=0.05
        )
        np.testing.assert_allclose(out.values, 0.4, rtol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(
        arrays(np.float64, (8, 8), elements=st.floats(min_value=0.0, max_value=1.0)),
        arrays(np.int64, (8, 8), elements=st.integers(min_value=1, max_value=16)),
        st.floats(min_value=0.0, max_value=0.002),
    )
    def test_conservation_with_closed_walls(self, rho, alpha, sigma):
        """Mass is conserved and stays nonnegative with closed walls."""
        g = build_grid((1.0, 1.0), 8, 8, T=0.5, nT=10)
        controls = ControlSet(16)
        params = InteractionParams(c_rep=0.2, r0=0.01, r=0.3)
        stencils = build_stencils(g, params, controls.directions)
        out, report = push_forward_step(DensityField(rho), alpha, g, controls.directions, stencils, params, sigma=sigma)
        assert report.mass_evacuated == 0.0
        assert report.mass_after == pytest.approx(report.mass_before, rel=1e-12, abs=1e-12)
        assert out.values.min() >= -1e-14

    def test_repulsion_violating_cfl(self):
        """A dense crowd with strong repulsion and dt = dx raises."""
        g = build_grid((1.0, 1.0), 10, 10, T=1.0, nT=10)
        controls = ControlSet(32)
        params = InteractionParams(c_rep=50.0, r0=0.01, r=0.3)
        stencils = build_stencils(g, params, controls.directions)
        rho = np.zeros(g.shape)
        rho[4:7, 4:7] = 100.0
        with pytest.raises(CFLViolation) as info:
            push_forward_step(DensityField(rho), np.full(g.shape, 16), g, controls.directions, stencils, params)
        assert info.value.ratio > 1.0


class TestDiffusion:
    """Test the zero-flux Laplacian and the diffusion positivity check."""
    def test_laplacian_of_a_spike(self):
        """A unit spike loses 4 at its cell and gives 1 to each neighbour."""
        values = np.zeros((5, 5))
        values[2, 2] = 1.0
        lap = laplacian_zero_flux(values)
        assert lap[2, 2] == -4.0
        assert lap[1, 2] == lap[3, 2] == lap[2, 1] == lap[2, 3] == 1.0
        assert lap.sum() == 0.0

    def test_corner_has_no_flux_out(self):
        """A corner cell only exchanges with its two neighbours."""
        values = np.zeros((3, 3))
        values[0, 0] = 1.0
        lap = laplacian_zero_flux(values)
        assert lap[0, 0] == -2.0
        assert lap.sum() == 0.0

    def test_positivity_check(self):
        """sigma dt must stay under the explicit-scheme limit."""
        g = build_grid((1.0, 1.0), 50, 50, T=1.0, nT=200)
        check_diffusion_positivity(g, 0.02)
        with pytest.raises(ConfigurationError, match="model.sigma"):
            check_diffusion_positivity(g, 0.05)


class TestAbsorbTargetMass:
    """Test removal of mass standing on target cells."""
    def test_removes_target_cells_only(self, small_grid):
        """Only mass on target cells is removed."""
        rho = np.full(small_grid.shape, 2.0)
        targets = np.zeros(small_grid.shape, dtype=bool)
        targets[3:5, 0] = True
        out, removed = absorb_target_mass(DensityField(rho), targets, small_grid)
        assert removed == pytest.approx(2 * 2.0 * small_grid.cell_area)
        assert out.values[3, 0] == 0.0
        assert out.values[5, 0] == 2.0

    def test_empty_targets(self, small_grid):
        """No target cells removes nothing."""
        rho = DensityField(np.ones(small_grid.shape))
        out, removed = absorb_target_mass(rho, np.zeros(small_grid.shape, dtype=bool), small_grid)
        assert removed == 0.0
        np.testing.assert_array_equal(out.values, rho.values)
