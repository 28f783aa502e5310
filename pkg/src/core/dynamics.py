"""
Time evolution of the penalized system

    d_t^2 u + Delta^2 u + (1/eps) grad F(u) = 0

by a kick-drift-kick splitting whose linear part is the exact per-mode flow,
plus a velocity-Verlet cross-check integrator and the optional
tangential-Laplacian variant force 2 Div(|grad u|^2 grad u).
"""

import logging
import math
from typing import Callable, List, Optional

import numpy as np

from src.core.diagnostics import compute_record
from src.core.field_ops import SpectralWorkspace, norm_sq
from src.core.sphere_geometry import grad_penalty
from src.exceptions import NonFinite, StabilityViolation
from src.models.sim_models import DiagnosticsRecord, Field, IntegratorConfig, PenaltyParams, Scheme, State, Variant

logger = logging.getLogger("biwave.core.dynamics")

VERLET_STABILITY_FACTOR = 1.9

Stepper = Callable[[State, IntegratorConfig, SpectralWorkspace], State]
Observer = Callable[[int, State, DiagnosticsRecord], None]


def linear_propagate(state: State, dt: float, ws: SpectralWorkspace) -> State:
    """
    Exact flow of d_t^2 u = -Delta^2 u over dt.

    Each Fourier mode with mu = |xi|^2 is a harmonic oscillator of frequency mu;
    the zero mode drifts freely.
    """
    ws.check(state.u)
    uhat = ws.forward(state.u)
    vhat = ws.forward(state.v)
    mu = ws.k2[..., np.newaxis]
    cos = np.cos(mu * dt)
    sin = np.sin(mu * dt)
    safe_mu = np.where(mu > 0, mu, 1.0)
    sin_over_mu = np.where(mu > 0, sin / safe_mu, dt)
    u_new = ws.backward(cos * uhat + sin_over_mu * vhat)
    v_new = ws.backward(-mu * sin * uhat + cos * vhat)
    return State(u=u_new, v=v_new, t=state.t + dt)


def penalty_kick(state: State, dt: float, p: PenaltyParams) -> State:
    """Exact flow of u' = 0, v' = -(1/eps) grad F(u) over dt."""
    v_new = state.v - (dt / p.epsilon) * grad_penalty(state.u, p)
    return State(u=state.u, v=v_new, t=state.t)


def variant_force(u: Field, ws: SpectralWorkspace, dealias: bool = False) -> Field:
    """
    Div(|grad u|^2 grad u) = sum_i d_i(|grad u|^2 d_i u).

    The cubic flux is formed pointwise, optionally 2/3-filtered, then
    differentiated spectrally.
    """
    grads = ws.gradient(u)
    grad_sq = sum(norm_sq(g) for g in grads)
    fluxes = [grad_sq[..., np.newaxis] * g for g in grads]
    if dealias:
        fluxes = [ws.dealias(f) for f in fluxes]
    return ws.divergence(fluxes)


def variant_kick(state: State, dt: float, ws: SpectralWorkspace, dealias: bool = False) -> State:
    """Exact flow of u' = 0, v' = -2 variant_force(u) over dt."""
    v_new = state.v - (2.0 * dt) * variant_force(state.u, ws, dealias)
    return State(u=state.u, v=v_new, t=state.t)


def _kick(state: State, dt: float, cfg: IntegratorConfig, ws: SpectralWorkspace) -> State:
    # both kicks freeze u, so they commute and compose exactly
    kicked = penalty_kick(state, dt, cfg.penalty)
    if cfg.variant == Variant.TANGENTIAL_LAPLACIAN:
        kicked = variant_kick(kicked, dt, ws, cfg.dealias)
    return kicked


def acceleration(u: Field, cfg: IntegratorConfig, ws: SpectralWorkspace) -> Field:
    """Full force -Delta^2 u - (1/eps) grad F(u) (- 2 variant_force(u) for the variant)."""
    force = -ws.bilaplacian(u) - grad_penalty(u, cfg.penalty) / cfg.penalty.epsilon
    if cfg.variant == Variant.TANGENTIAL_LAPLACIAN:
        force = force - 2.0 * variant_force(u, ws, cfg.dealias)
    return force


def _require_finite(result: State, previous: State) -> State:
    if not result.is_finite():
        logger.error(f"Blow-up detected at t={result.t!r}")
        raise NonFinite(result.t, last_good=previous)
    return result


def step_strang(state: State, cfg: IntegratorConfig, ws: SpectralWorkspace, dt: Optional[float] = None) -> State:
    """
    One Strang step: half kick, exact linear drift, half kick.

    A negative dt steps backwards in time.
    """
    dt = cfg.dt if dt is None else dt
    half = _kick(state, 0.5 * dt, cfg, ws)
    drifted = linear_propagate(half, dt, ws)
    return _require_finite(_kick(drifted, 0.5 * dt, cfg, ws), state)


def stability_budget(cfg: IntegratorConfig, ws: SpectralWorkspace) -> float:
    """Largest dt velocity Verlet tolerates for the linearized force."""
    lambda_max = ws.max_k4 + 8.0 / cfg.penalty.epsilon
    return VERLET_STABILITY_FACTOR / math.sqrt(lambda_max)


def step_verlet(state: State, cfg: IntegratorConfig, ws: SpectralWorkspace, dt: Optional[float] = None) -> State:
    """
    One velocity-Verlet (kick-drift-kick) step with the full force.

    Raises:
        StabilityViolation: if |dt| exceeds the linearized stability budget
    """
    dt = cfg.dt if dt is None else dt
    budget = stability_budget(cfg, ws)
    if abs(dt) > budget:
        raise StabilityViolation(f"dt={dt!r} exceeds the velocity Verlet budget {budget:.3e}")
    v_half = state.v + 0.5 * dt * acceleration(state.u, cfg, ws)
    u_new = state.u + dt * v_half
    v_new = v_half + 0.5 * dt * acceleration(u_new, cfg, ws)
    return _require_finite(State(u=u_new, v=v_new, t=state.t + dt), state)


def stepper_for(cfg: IntegratorConfig) -> Callable[..., State]:
    """Return the step function configured by cfg.scheme."""
    if cfg.scheme == Scheme.STRANG_SPLIT:
        return step_strang
    return step_verlet


class Trajectory:
    """Sampled states and diagnostics of one run."""

    def __init__(self):
        self.states: List[State] = []
        self.records: List[DiagnosticsRecord] = []
        self.final: Optional[State] = None

    @property
    def times(self) -> List[float]:
        return [record.t for record in self.records]


def step_count(T: float, dt: float) -> int:
    """Number of steps ceil(T/dt), tolerant to roundoff in T/dt."""
    ratio = T / dt
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return max(int(nearest), 1)
    return int(math.ceil(ratio))


def _neighbour(
    step: Callable[..., State],
    state: State,
    cfg: IntegratorConfig,
    ws: SpectralWorkspace,
    dt: float,
) -> State:
    """
    Frame one step outside [0, T], used only for the acceleration estimate.

    A blow-up there does not fail the run: state itself is returned and the
    difference quotient becomes one-sided.
    """
    try:
        return step(state, cfg, ws, dt)
    except NonFinite as e:
        logger.warning(
            f"Frame at t={e.t!r} outside the run is not finite; one-sided acceleration at t={state.t!r}"
        )
        return state


def run(
    initial: State,
    cfg: IntegratorConfig,
    T: float,
    sample_every: int,
    ws: SpectralWorkspace,
    keep_states: bool = True,
    observer: Optional[Observer] = None,
) -> Trajectory:
    """
    Iterate the configured stepper ceil(T/dt) times and sample diagnostics.

    Records are taken at step 0, every sample_every steps, and at the final
    step. The acceleration used by the residual diagnostics is the centered
    difference of v between the neighbouring frames; the frame before t=0 is
    produced by one reversed step and the frame after T by one extra step.
    If either of those two frames blows up, the record at that end uses a
    one-sided difference instead.

    Args:
        initial: Initial state
        cfg: Integrator configuration
        T: Final time
        sample_every: Sampling stride in steps
        ws: Spectral workspace of the grid
        keep_states: Keep sampled states in the trajectory
        observer: Callback invoked with (step index, state, record) at every sample

    Returns:
        Trajectory: Sampled states and records

    Raises:
        NonFinite: on blow-up, with the failure time and last good state attached
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    step = stepper_for(cfg)
    steps = step_count(T, cfg.dt)
    logger.info(f"Running {steps} {cfg.scheme.value} steps of dt={cfg.dt!r} to T={T!r}")

    trajectory = Trajectory()
    previous = _neighbour(step, initial, cfg, ws, -cfg.dt)
    current = initial
    for index in range(steps + 1):
        if index == steps:
            following = _neighbour(step, current, cfg, ws, cfg.dt)
        else:
            following = step(current, cfg, ws)
        if index % sample_every == 0 or index == steps:
            record = compute_record(current, previous, following, cfg, ws)
            logger.debug(f"t={record.t:.6g} E_eps={record.energy_penalized:.12g} mass={record.penalty_mass:.3e}")
            if keep_states:
                trajectory.states.append(current)
            trajectory.records.append(record)
            if observer is not None:
                observer(index, current, record)
        if index == steps:
            break
        previous, current = current, following
    trajectory.final = current
    return trajectory
