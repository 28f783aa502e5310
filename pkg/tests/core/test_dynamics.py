"""
Unit tests for the time integrators of the penalized system.
"""

from unittest.mock import patch

import numpy as np
import pytest

from src.core.diagnostics import all_charges, energy_penalized
from src.core.dynamics import (
    linear_propagate,
    penalty_kick,
    run,
    stability_budget,
    step_count,
    step_strang,
    step_verlet,
    stepper_for,
    variant_force,
)
from src.core.field_ops import SpectralWorkspace, grid_coordinates
from src.core.initial_data import build_initial_state, dispersion_omega, great_circle_wave, random_sphere_field
from src.exceptions import NonFinite, StabilityViolation
from src.models.sim_models import (
    GridSpec,
    InitialDataSpec,
    IntegratorConfig,
    PenaltyParams,
    Scheme,
    State,
    Variant,
)

PLANE = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def random_state(grid, ws, l=2, seed=5, amplitude=0.2, max_mode=2):
    spec = InitialDataSpec(max_mode=max_mode, amplitude=amplitude, velocity_amplitude=amplitude, seed=seed)
    return build_initial_state(spec, grid, l, ws)


def integrator(epsilon, dt, **kwargs):
    return IntegratorConfig(dt=dt, penalty=PenaltyParams(epsilon=epsilon), **kwargs)


class TestLinearFlow:
    """Tests for the exact biharmonic propagator."""

    def setup_method(self):
        """Set up a 1D grid."""
        self.grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        self.ws = SpectralWorkspace(self.grid, workers=1)

    def test_forward_backward_identity_expected(self):
        """
        Test that propagating by dt and then by -dt is the identity.

        Expected use case.
        """
        state = random_state(self.grid, self.ws)

        back = linear_propagate(linear_propagate(state, 0.3, self.ws), -0.3, self.ws)

        np.testing.assert_allclose(back.u, state.u, atol=1e-12)
        np.testing.assert_allclose(back.v, state.v, atol=1e-12)
        assert back.t == pytest.approx(0.0)

    def test_zero_mode_drifts_edge(self):
        """
        Test that constant data moves with constant velocity.

        Edge case.
        """
        u = np.tile([1.0, 0.0], (32, 1))
        v = np.tile([0.0, 2.0], (32, 1))

        moved = linear_propagate(State(u=u, v=v), 0.5, self.ws)

        np.testing.assert_allclose(moved.u, np.tile([1.0, 1.0], (32, 1)), atol=1e-14)
        np.testing.assert_allclose(moved.v, v, atol=1e-14)


class TestPenaltyKick:
    """Tests for the penalty sub-flow."""

    def setup_method(self):
        """Set up a 1D grid."""
        self.grid = GridSpec(n=1, points=(16,), lengths=(2 * np.pi,))
        self.ws = SpectralWorkspace(self.grid, workers=1)

    def test_single_point_off_sphere_expected(self):
        """
        Test the kick -(dt/eps) grad F at u = 1.1 e1 and zero elsewhere on the sphere.

        Expected use case.
        """
        u = np.tile([1.0, 0.0], (16, 1))
        u[3] = [1.1, 0.0]
        state = State(u=u, v=np.zeros((16, 2)), t=0.25)

        kicked = penalty_kick(state, 1e-3, PenaltyParams(epsilon=0.01))

        np.testing.assert_allclose(kicked.v[3], [-0.0924, 0.0], atol=1e-15)
        np.testing.assert_array_equal(np.delete(kicked.v, 3, axis=0), 0.0)
        assert kicked.u is state.u
        assert kicked.t == 0.25

    def test_charges_unchanged_expected(self):
        """
        Test that the kick leaves every Noether charge unchanged off the sphere.

        Expected use case.
        """
        (x,) = grid_coordinates(self.grid)
        base = random_state(self.grid, self.ws, l=2)
        u = (1.0 + 0.2 * np.cos(x))[:, np.newaxis] * base.u
        state = State(u=u, v=base.v)
        before = np.array(all_charges(state, self.ws))

        kicked = penalty_kick(state, 1e-3, PenaltyParams(epsilon=0.01))

        assert np.max(np.abs(kicked.v - state.v)) > 1e-3
        after = np.array(all_charges(kicked, self.ws))
        np.testing.assert_allclose(after, before, rtol=0.0, atol=1e-14 * (1.0 + np.max(np.abs(before))))


class TestStrangSplitting:
    """Tests for the kick-drift-kick integrator."""

    def test_great_circle_reproduced_expected(self):
        """
        Test that the travelling wave with omega = k^2 is reproduced over T=1.

        Expected use case.
        """
        grid = GridSpec(n=1, points=(64,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        cfg = integrator(1e-2, 5e-4)
        state = great_circle_wave(grid, (2,), 4.0, PLANE)

        for _ in range(step_count(1.0, cfg.dt)):
            state = step_strang(state, cfg, ws)

        exact = great_circle_wave(grid, (2,), 4.0, PLANE, phase=-4.0 * state.t)
        assert state.t == pytest.approx(1.0)
        assert np.max(np.abs(state.u - exact.u)) <= 1e-9
        assert np.max(np.abs(state.v - exact.v)) <= 1e-8

    def test_time_reversible_expected(self):
        """
        Test that stepping back with -dt retraces the trajectory.

        Expected use case.
        """
        grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        cfg = integrator(1e-2, 0.01)
        start = random_state(grid, ws)

        state = start
        for _ in range(20):
            state = step_strang(state, cfg, ws)
        for _ in range(20):
            state = step_strang(state, cfg, ws, dt=-cfg.dt)

        np.testing.assert_allclose(state.u, start.u, atol=1e-9)
        np.testing.assert_allclose(state.v, start.v, atol=1e-9)

    def test_noether_charges_conserved_expected(self):
        """
        Test that all rotation charges are conserved to roundoff over T=1.

        Expected use case.
        """
        grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        cfg = integrator(1e-2, 0.01)
        state = random_state(grid, ws, l=2)
        q0 = np.array(all_charges(state, ws))

        for _ in range(100):
            state = step_strang(state, cfg, ws)

        drift = np.abs(np.array(all_charges(state, ws)) - q0)
        assert np.all(drift <= 1e-8 * (1 + np.abs(q0)))

    def test_variant_conserves_charges_expected(self):
        """
        Test charge conservation with the tangential-Laplacian force switched on.

        Expected use case.
        """
        grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        cfg = integrator(1e-2, 0.005, variant=Variant.TANGENTIAL_LAPLACIAN)
        state = random_state(grid, ws, l=2, amplitude=0.1)
        q0 = np.array(all_charges(state, ws))

        for _ in range(40):
            state = step_strang(state, cfg, ws)

        drift = np.abs(np.array(all_charges(state, ws)) - q0)
        assert np.all(drift <= 1e-8 * (1 + np.abs(q0)))

    def test_energy_nearly_conserved_expected(self):
        """
        Test relative energy drift at dt = 0.1 sqrt(eps) over T=1.

        Expected use case.
        """
        grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        cfg = integrator(1e-2, 0.01)
        state = random_state(grid, ws)

        trajectory = run(state, cfg, 1.0, 1, ws, keep_states=False)

        energies = np.array([record.energy_penalized for record in trajectory.records])
        assert np.max(np.abs(energies - energies[0])) / energies[0] <= 1e-3

    def test_energy_drift_decreases_with_dt_expected(self):
        """
        Test that halving dt shrinks the energy drift roughly fourfold.

        Expected use case.
        """
        grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        state = random_state(grid, ws)

        drifts = []
        for dt in (0.01, 0.005):
            trajectory = run(state, integrator(1e-2, dt), 0.5, 1, ws, keep_states=False)
            energies = np.array([record.energy_penalized for record in trajectory.records])
            drifts.append(np.max(np.abs(energies - energies[0])))

        assert drifts[1] < 1e-11 or drifts[0] / drifts[1] >= 3.0

    def test_non_finite_data_failure(self):
        """
        Test that blow-up raises NonFinite carrying the last good state.

        Failure case.
        """
        grid = GridSpec(n=1, points=(16,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        u = np.tile([1.0, 0.0], (16, 1))
        u[3, 0] = np.nan
        bad = State(u=u, v=np.zeros((16, 2)))

        with pytest.raises(NonFinite) as info:
            step_strang(bad, integrator(1e-2, 0.01), ws)

        assert info.value.last_good is bad


class TestTwoDimensional:
    """Tests for the integrator on a 2D torus."""

    def setup_method(self):
        """Set up a non-square 2D grid."""
        self.grid = GridSpec(n=2, points=(16, 16), lengths=(2 * np.pi, 4 * np.pi))
        self.ws = SpectralWorkspace(self.grid, workers=1)

    def test_great_circle_reproduced_expected(self):
        """
        Test the oblique great-circle wave k = (1, 2) over 500 steps.

        Expected use case.
        """
        omega = dispersion_omega(self.grid, (1, 2))
        cfg = integrator(1e-2, 2e-3)
        state = great_circle_wave(self.grid, (1, 2), omega, PLANE)

        for _ in range(500):
            state = step_strang(state, cfg, self.ws)

        exact = great_circle_wave(self.grid, (1, 2), omega, PLANE, phase=-omega * state.t)
        assert omega == pytest.approx(2.0)
        assert state.t == pytest.approx(1.0)
        assert np.max(np.abs(state.u - exact.u)) <= 1e-10
        assert np.max(np.abs(state.v - exact.v)) <= 1e-9

    def test_random_data_conserves_charges_expected(self):
        """
        Test charge conservation and bounded energy drift for random 2D data.

        Expected use case.
        """
        cfg = integrator(1e-2, 0.01)
        state = random_state(self.grid, self.ws, l=2)
        q0 = np.array(all_charges(state, self.ws))

        trajectory = run(state, cfg, 0.2, 1, self.ws, keep_states=False)

        charges = np.array([record.charges for record in trajectory.records])
        energies = np.array([record.energy_penalized for record in trajectory.records])
        assert len(trajectory.records) == 21
        assert np.all(np.abs(charges - q0) <= 1e-10 * (1 + np.abs(q0)))
        assert np.max(np.abs(energies - energies[0])) / energies[0] <= 1e-3


class TestVariantForce:
    """Tests for the cubic force Div(|grad u|^2 grad u)."""

    def test_great_circle_expected(self):
        """
        Test Div(|grad u|^2 grad u) = -k^4 u on a great circle.

        Expected use case.
        """
        grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        state = great_circle_wave(grid, (3,), 0.0, PLANE)

        np.testing.assert_allclose(variant_force(state.u, ws), -81.0 * state.u, atol=1e-9)
        np.testing.assert_allclose(variant_force(state.u, ws, dealias=True), -81.0 * state.u, atol=1e-9)

    def test_cubic_homogeneity_edge(self):
        """
        Test that the force is homogeneous of degree three, not linear.

        Edge case.
        """
        grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        ws = SpectralWorkspace(grid, workers=1)
        u = random_sphere_field(grid, 2, 3, 0.3, seed=8)

        force = variant_force(u, ws)

        np.testing.assert_allclose(variant_force(2.0 * u, ws), 8.0 * force, rtol=0.0, atol=1e-10 * np.max(np.abs(force)))
        assert np.max(np.abs(variant_force(2.0 * u, ws) - 2.0 * force)) > 1.0 * np.max(np.abs(force))


class TestVelocityVerlet:
    """Tests for the velocity-Verlet cross-check integrator."""

    def setup_method(self):
        """Set up a 1D grid."""
        self.grid = GridSpec(n=1, points=(16,), lengths=(2 * np.pi,))
        self.ws = SpectralWorkspace(self.grid, workers=1)

    def test_linear_mode_second_order_expected(self):
        """
        Test Verlet against the exact k=1 wave with a negligible penalty.

        Expected use case.
        """
        cfg = integrator(1e12, 0.01, scheme=Scheme.VELOCITY_VERLET)
        state = great_circle_wave(self.grid, (1,), 1.0, PLANE)

        for _ in range(100):
            state = step_verlet(state, cfg, self.ws)

        exact = great_circle_wave(self.grid, (1,), 1.0, PLANE, phase=-state.t)
        assert np.max(np.abs(state.u - exact.u)) <= 1e-4

    def test_budget_exceeded_failure(self):
        """
        Test that a dt beyond the linearized budget is rejected.

        Failure case.
        """
        cfg = integrator(1e-2, 0.1, scheme=Scheme.VELOCITY_VERLET)
        state = great_circle_wave(self.grid, (1,), 1.0, PLANE)

        assert stability_budget(cfg, self.ws) < 0.1
        with pytest.raises(StabilityViolation):
            step_verlet(state, cfg, self.ws)

    def test_agrees_with_strang_expected(self):
        """
        Test Verlet against the splitting integrator on random data at eps = 0.1, dt = 1e-4.

        Expected use case.
        """
        verlet_cfg = integrator(0.1, 1e-4, scheme=Scheme.VELOCITY_VERLET)
        strang_cfg = integrator(0.1, 1e-4)
        verlet = strang = random_state(self.grid, self.ws, l=2)

        for _ in range(1000):
            verlet = step_verlet(verlet, verlet_cfg, self.ws)
            strang = step_strang(strang, strang_cfg, self.ws)

        assert verlet.t == pytest.approx(0.1)
        assert np.max(np.abs(verlet.u - strang.u)) <= 1e-6
        assert np.max(np.abs(verlet.v - strang.v)) <= 1e-4

    def test_stepper_dispatch_expected(self):
        """
        Test that the scheme selects the step function.

        Expected use case.
        """
        assert stepper_for(integrator(1.0, 0.01)) is step_strang
        assert stepper_for(integrator(1.0, 0.01, scheme=Scheme.VELOCITY_VERLET)) is step_verlet


class TestRun:
    """Tests for the sampling driver."""

    def setup_method(self):
        """Set up a great-circle wave on a 1D grid."""
        self.grid = GridSpec(n=1, points=(32,), lengths=(2 * np.pi,))
        self.ws = SpectralWorkspace(self.grid, workers=1)
        self.state = great_circle_wave(self.grid, (2,), 4.0, PLANE)
        self.cfg = integrator(1e-2, 0.01)

    def test_sampling_expected(self):
        """
        Test record times, kept states and observer calls.

        Expected use case.
        """
        seen = []

        trajectory = run(self.state, self.cfg, 0.1, 5, self.ws, observer=lambda i, s, r: seen.append(i))

        assert seen == [0, 5, 10]
        np.testing.assert_allclose(trajectory.times, [0.0, 0.05, 0.1], atol=1e-12)
        assert len(trajectory.states) == 3
        assert trajectory.final.t == pytest.approx(0.1)

    def test_final_step_always_recorded_edge(self):
        """
        Test that the last step is sampled even off the stride.

        Edge case.
        """
        trajectory = run(self.state, self.cfg, 0.07, 5, self.ws, keep_states=False)

        np.testing.assert_allclose(trajectory.times, [0.0, 0.05, 0.07], atol=1e-12)
        assert trajectory.states == []

    def test_great_circle_diagnostics_expected(self):
        """
        Test that an exact solution shows no penalty mass and no tangential residual.

        Expected use case.
        """
        trajectory = run(self.state, self.cfg, 0.1, 1, self.ws, keep_states=False)

        for record in trajectory.records:
            assert record.penalty_mass <= 1e-14
            assert record.tangential_residual_l2 <= 1e-8
            assert record.energy_penalized == pytest.approx(
                energy_penalized(self.state, self.cfg.penalty, self.ws), rel=1e-12
            )

    def test_step_count_edge(self):
        """
        Test ceil(T/dt) with roundoff tolerance.

        Edge case.
        """
        assert step_count(1.0, 0.1) == 10
        assert step_count(0.3, 0.1) == 3
        assert step_count(1.0, 0.3) == 4

    def test_nonpositive_time_failure(self):
        """
        Test that T must be positive.

        Failure case.
        """
        with pytest.raises(ValueError):
            run(self.state, self.cfg, 0.0, 1, self.ws)

    def test_blow_up_past_final_time_edge(self):
        """
        Test that a non-finite frame beyond T or before 0 does not fail a finished run.

        Edge case.
        """
        calls = []

        def fragile_step(state, cfg, ws, dt=None):
            result = step_strang(state, cfg, ws, dt)
            calls.append(result.t)
            if result.t > 0.1 + 1e-9 or result.t < -1e-9:
                raise NonFinite(result.t, last_good=state)
            return result

        with patch("src.core.dynamics.stepper_for", return_value=fragile_step):
            trajectory = run(self.state, self.cfg, 0.1, 5, self.ws)

        assert len(calls) == 12
        np.testing.assert_allclose(trajectory.times, [0.0, 0.05, 0.1], atol=1e-12)
        assert trajectory.final.t == pytest.approx(0.1)
        assert all(np.isfinite(record.tangential_residual_l2) for record in trajectory.records)

    def test_blow_up_inside_run_failure(self):
        """
        Test that a non-finite step before T still fails the run.

        Failure case.
        """

        def fragile_step(state, cfg, ws, dt=None):
            result = step_strang(state, cfg, ws, dt)
            if result.t > 0.055:
                raise NonFinite(result.t, last_good=state)
            return result

        with patch("src.core.dynamics.stepper_for", return_value=fragile_step):
            with pytest.raises(NonFinite) as info:
                run(self.state, self.cfg, 0.1, 5, self.ws)

        assert info.value.t == pytest.approx(0.06)
        assert info.value.last_good.t == pytest.approx(0.05)
