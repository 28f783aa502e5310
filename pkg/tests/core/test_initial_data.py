"""
Unit tests for initial data generators and preparation.
"""

from unittest.mock import patch

import numpy as np
import pytest

from src.core.field_ops import SpectralWorkspace, grid_coordinates, inner, norm_sq
from src.core.initial_data import (
    MAX_RESAMPLES,
    build_initial_state,
    dispersion_omega,
    great_circle_wave,
    prepare,
    random_sphere_field,
    random_tangent_field,
)
from src.core.sphere_geometry import project_sphere
from src.exceptions import DegenerateVector, NonOrthonormalPlane
from src.models.sim_models import Generator, GridSpec, InitialDataSpec


class TestGreatCircleWave:
    """Tests for the travelling great-circle family."""

    def setup_method(self):
        """Set up a 2D grid."""
        self.grid = GridSpec(n=2, points=(16, 16), lengths=(2 * np.pi, 2 * np.pi))
        self.plane = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))

    def test_unit_length_expected(self):
        """
        Test |u| = 1 at every grid point and <v, u> = 0.

        Expected use case.
        """
        state = great_circle_wave(self.grid, (1, 2), 5.0, self.plane, phase=0.4)

        assert state.u.shape == (16, 16, 3)
        np.testing.assert_allclose(norm_sq(state.u), 1.0, atol=1e-15)
        np.testing.assert_allclose(inner(state.u, state.v), 0.0, atol=1e-14)

    def test_velocity_is_time_derivative_expected(self):
        """
        Test v against a difference quotient of the travelling phase.

        Expected use case.
        """
        h = 1e-6
        omega = 2.0
        state = great_circle_wave(self.grid, (1, 0), omega, self.plane)
        ahead = great_circle_wave(self.grid, (1, 0), omega, self.plane, phase=-omega * h)
        behind = great_circle_wave(self.grid, (1, 0), omega, self.plane, phase=omega * h)

        np.testing.assert_allclose((ahead.u - behind.u) / (2 * h), state.v, atol=1e-8)

    def test_constant_map_edge(self):
        """
        Test that k=0, omega=0 gives the constant map p1 at rest.

        Edge case.
        """
        state = great_circle_wave(self.grid, (0, 0), 0.0, self.plane)

        np.testing.assert_allclose(state.u, np.broadcast_to(self.plane[0], (16, 16, 3)))
        np.testing.assert_array_equal(state.v, 0.0)

    def test_non_orthonormal_plane_failure(self):
        """
        Test that the plane vectors must be orthonormal.

        Failure case.
        """
        plane = (np.array([1.0, 0.0, 0.0]), np.array([0.5, 0.5, 0.0]))

        with pytest.raises(NonOrthonormalPlane):
            great_circle_wave(self.grid, (1, 0), 1.0, plane)

    def test_dispersion_omega_expected(self):
        """
        Test omega = |k|^2 in physical wavenumbers.

        Expected use case.
        """
        grid = GridSpec(n=2, points=(16, 16), lengths=(2 * np.pi, 4 * np.pi))

        assert dispersion_omega(grid, (2, 2)) == pytest.approx(4.0 + 1.0)


class TestRandomFields:
    """Tests for seeded random sphere-valued and tangent fields."""

    def setup_method(self):
        """Set up a 1D grid."""
        self.grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))

    def test_sphere_valued_expected(self):
        """
        Test that the field lies on the sphere to roundoff.

        Expected use case.
        """
        u = random_sphere_field(self.grid, 2, 4, 0.3, seed=1)

        assert u.shape == (32, 3)
        assert np.max(np.abs(norm_sq(u) - 1.0)) <= 1e-14

    def test_deterministic_in_seed_expected(self):
        """
        Test that one seed gives bit-identical fields and another seed does not.

        Expected use case.
        """
        first = random_sphere_field(self.grid, 2, 4, 0.3, seed=7)
        second = random_sphere_field(self.grid, 2, 4, 0.3, seed=7)
        other = random_sphere_field(self.grid, 2, 4, 0.3, seed=8)

        np.testing.assert_array_equal(first, second)
        assert not np.array_equal(first, other)

    def test_same_field_on_every_grid_expected(self):
        """
        Test that the seed fixes one continuous field sampled on any grid.

        Expected use case.
        """
        fine = random_sphere_field(self.grid.refined(2), 1, 3, 0.3, seed=2)
        coarse = random_sphere_field(self.grid, 1, 3, 0.3, seed=2)

        np.testing.assert_allclose(fine[::2], coarse, atol=1e-12)

    def test_zero_amplitude_edge(self):
        """
        Test that amplitude 0 gives the constant map e1.

        Edge case.
        """
        u = random_sphere_field(self.grid, 1, 4, 0.0, seed=3)

        np.testing.assert_array_equal(u, np.tile([1.0, 0.0], (32, 1)))

    def test_too_many_modes_failure(self):
        """
        Test that max_mode must stay below N/3.

        Failure case.
        """
        with pytest.raises(ValueError):
            random_sphere_field(self.grid, 1, 11, 0.3, seed=0)

    def test_degenerate_draws_resampled_failure(self):
        """
        Test that degenerate draws are retried and finally reported.

        Failure case.
        """
        with patch("src.core.initial_data.project_sphere", side_effect=DegenerateVector("short")) as mock:
            with pytest.raises(DegenerateVector):
                random_sphere_field(self.grid, 1, 2, 0.3, seed=0)

        assert mock.call_count == MAX_RESAMPLES

    def test_degenerate_draw_recovers_expected(self):
        """
        Test that a single degenerate draw is replaced by a fresh one.

        Expected use case.
        """
        with patch(
            "src.core.initial_data.project_sphere",
            side_effect=[DegenerateVector("short"), np.ones((32, 2))],
        ) as mock:
            u = random_sphere_field(self.grid, 1, 2, 0.3, seed=0)

        assert mock.call_count == 2
        np.testing.assert_array_equal(u, 1.0)

    def test_tangent_field_expected(self):
        """
        Test that random velocities are tangent.

        Expected use case.
        """
        u = random_sphere_field(self.grid, 2, 3, 0.3, seed=4)

        v = random_tangent_field(u, self.grid, 3, 0.5, seed=5)

        assert np.max(np.abs(inner(u, v))) <= 1e-14
        assert np.max(np.abs(v)) > 0.0


class TestPrepare:
    """Tests for making raw data admissible."""

    def setup_method(self):
        """Set up a 1D grid and raw data."""
        self.grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        self.ws = SpectralWorkspace(self.grid, workers=1)
        (x,) = grid_coordinates(self.grid)
        self.u0 = np.stack([2.0 + np.cos(x), np.sin(2 * x), 0.5 * np.cos(3 * x)], axis=-1)
        self.u1 = np.stack([np.sin(x), np.ones_like(x), np.cos(x)], axis=-1)

    def test_admissible_output_expected(self):
        """
        Test the constraint and tangency of prepared data.

        Expected use case.
        """
        state = prepare(self.u0, self.u1, self.ws)

        assert np.max(np.abs(norm_sq(state.u) - 1.0)) <= 1e-14
        assert np.max(np.abs(inner(state.u, state.v))) <= 1e-14
        assert state.t == 0.0

    def test_idempotent_expected(self):
        """
        Test that preparing prepared data changes nothing, bit for bit.

        Expected use case.
        """
        once = prepare(self.u0, self.u1, self.ws)

        twice = prepare(once.u, once.v, self.ws)

        np.testing.assert_array_equal(twice.u, once.u)
        np.testing.assert_array_equal(twice.v, once.v)

    def test_normal_velocity_removed_edge(self):
        """
        Test that u1 = u0 leaves no velocity.

        Edge case.
        """
        u0 = project_sphere(self.u0)

        state = prepare(u0, u0.copy(), self.ws)

        np.testing.assert_allclose(state.v, 0.0, atol=1e-15)

    def test_smoothing_then_projection_expected(self):
        """
        Test that low-passed data is still admissible after projection.

        Expected use case.
        """
        for modes in (1, 2, 5):
            state = prepare(self.u0, self.u1, self.ws, smooth_modes=modes)

            assert np.max(np.abs(norm_sq(state.u) - 1.0)) <= 1e-14
            assert np.max(np.abs(inner(state.u, state.v))) <= 1e-14

    def test_degenerate_position_failure(self):
        """
        Test that a vanishing position vector cannot be retracted.

        Failure case.
        """
        u0 = self.u0.copy()
        u0[4] = 0.0

        with pytest.raises(DegenerateVector):
            prepare(u0, self.u1, self.ws)


class TestBuildInitialState:
    """Tests for generator dispatch from the configuration."""

    def setup_method(self):
        """Set up a 1D grid."""
        self.grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        self.ws = SpectralWorkspace(self.grid, workers=1)

    def test_great_circle_defaults_expected(self):
        """
        Test the default plane (e1, e2) and omega = |k|^2.

        Expected use case.
        """
        spec = InitialDataSpec(generator=Generator.GREAT_CIRCLE, k=(2,))

        state = build_initial_state(spec, self.grid, 1, self.ws)

        np.testing.assert_allclose(state.u[0], [1.0, 0.0])
        np.testing.assert_allclose(norm_sq(state.v), 16.0)

    def test_random_admissible_expected(self):
        """
        Test that random data is sphere-valued and tangent.

        Expected use case.
        """
        spec = InitialDataSpec(seed=3, max_mode=3)

        state = build_initial_state(spec, self.grid, 2, self.ws)

        assert state.u.shape == (32, 3)
        assert np.max(np.abs(norm_sq(state.u) - 1.0)) <= 1e-14
        assert np.max(np.abs(inner(state.u, state.v))) <= 1e-14

    def test_normal_velocity_edge(self):
        """
        Test that the ill-prepared option adds a normal velocity of the requested size.

        Edge case.
        """
        spec = InitialDataSpec(seed=3, max_mode=3, normal_velocity=0.5)

        state = build_initial_state(spec, self.grid, 2, self.ws)

        np.testing.assert_allclose(inner(state.u, state.v), 0.5, atol=1e-14)
