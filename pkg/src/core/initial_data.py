"""
Admissible initial data: sphere-valued u0 and tangent u1.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from src.core.field_ops import SpectralWorkspace, grid_coordinates, inner, norm_sq
from src.core.sphere_geometry import project_sphere, project_tangent
from src.exceptions import DegenerateVector, NonOrthonormalPlane
from src.models.sim_models import Field, Generator, GridSpec, InitialDataSpec, State

logger = logging.getLogger("biwave.core.initial_data")

ORTHONORMAL_TOL = 1e-12
ADMISSIBLE_TOL = 1e-14
MAX_RESAMPLES = 100


def great_circle_wave(
    grid: GridSpec,
    k: Sequence[int],
    omega: float,
    plane: Tuple[np.ndarray, np.ndarray],
    phase: float = 0.0,
) -> State:
    """
    Travelling great-circle wave u = cos(theta) p1 + sin(theta) p2, theta = k.x - omega t + phase.

    Solves the geometric equation for every (k, omega) and the penalized equation
    when omega^2 = |k|^4 (physical wavenumbers).

    Args:
        grid: The grid
        k: Integer wave vector, one entry per axis (physical wavenumber 2 pi k_i / L_i)
        omega: Angular frequency
        plane: Orthonormal pair (p1, p2) in R^{l+1}
        phase: Phase offset

    Returns:
        State: Data at t = 0

    Raises:
        NonOrthonormalPlane: if p1, p2 are not orthonormal within 1e-12
    """
    p1, p2 = (np.asarray(vector, dtype=float) for vector in plane)
    gram = np.array([[p1 @ p1, p1 @ p2], [p2 @ p1, p2 @ p2]])
    if p1.shape != p2.shape or np.max(np.abs(gram - np.eye(2))) > ORTHONORMAL_TOL:
        raise NonOrthonormalPlane(f"plane vectors are not orthonormal, Gram matrix {gram.tolist()}")
    if len(k) != grid.n:
        raise ValueError(f"wave vector needs {grid.n} entries, got {len(k)}")

    theta = phase + sum(
        (2.0 * np.pi * k_i / length) * x for k_i, length, x in zip(k, grid.lengths, grid_coordinates(grid))
    )
    theta = np.broadcast_to(theta, tuple(grid.points))
    cos = np.cos(theta)[..., np.newaxis]
    sin = np.sin(theta)[..., np.newaxis]
    u = cos * p1 + sin * p2
    v = omega * (sin * p1 - cos * p2)
    return State(u=u, v=v, t=0.0)


def dispersion_omega(grid: GridSpec, k: Sequence[int]) -> float:
    """Frequency |k|^2 for which the great-circle wave solves the linear equation."""
    return float(sum((2.0 * np.pi * k_i / length) ** 2 for k_i, length in zip(k, grid.lengths)))


def _band_limited_field(
    grid: GridSpec,
    components: int,
    max_mode: int,
    rng: np.random.Generator,
) -> Field:
    """
    Real field with Gaussian Fourier coefficients on modes |m_i| <= max_mode.

    The coefficient block has size (2 max_mode + 1)^n independent of the grid,
    so a seed determines one continuous field sampled on any grid. Normalized
    to unit coefficient norm.
    """
    width = 2 * max_mode + 1
    block_shape = (width,) * grid.n + (components,)
    coeffs = rng.standard_normal(block_shape) + 1j * rng.standard_normal(block_shape)
    coeffs /= np.sqrt(np.sum(np.abs(coeffs) ** 2))
    modes = np.arange(-max_mode, max_mode + 1)

    field = np.zeros(tuple(grid.points) + (components,))
    coords = grid_coordinates(grid)
    for index in np.ndindex(*((width,) * grid.n)):
        phase = sum(
            (2.0 * np.pi * modes[i] / length) * x for i, length, x in zip(index, grid.lengths, coords)
        )
        phase = np.broadcast_to(phase, tuple(grid.points))[..., np.newaxis]
        c = coeffs[index]
        field += c.real * np.cos(phase) - c.imag * np.sin(phase)
    return field


def random_sphere_field(
    grid: GridSpec,
    l: int,
    max_mode: int,
    amplitude: float,
    seed: int,
    rng: Optional[np.random.Generator] = None,
) -> Field:
    """
    Band-limited random perturbation of e1 retracted onto the sphere.

    Deterministic in seed. Degenerate draws are resampled from the same
    generator up to 100 times.

    Args:
        grid: The grid
        l: Sphere dimension (fields have l+1 components)
        max_mode: Highest Fourier mode index, < min(N_i)/3
        amplitude: Perturbation scale
        seed: Random seed
        rng: Generator to draw from instead of a fresh one seeded by seed

    Returns:
        Field: Sphere-valued field

    Raises:
        DegenerateVector: if every draw has a vector of norm < 1e-8
    """
    if not max_mode < min(grid.points) / 3:
        raise ValueError(f"max_mode={max_mode} must be below min(N)/3")
    rng = rng if rng is not None else np.random.default_rng(seed)
    offset = np.zeros(l + 1)
    offset[0] = 1.0

    @retry(
        stop=stop_after_attempt(MAX_RESAMPLES),
        retry=retry_if_exception_type(DegenerateVector),
        reraise=True,
    )
    def draw() -> Field:
        perturbation = amplitude * _band_limited_field(grid, l + 1, max_mode, rng)
        return project_sphere(offset + perturbation)

    return draw()


def random_tangent_field(
    u: Field,
    grid: GridSpec,
    max_mode: int,
    amplitude: float,
    seed: int,
    rng: Optional[np.random.Generator] = None,
) -> Field:
    """Band-limited random velocity projected onto the tangent spaces of u."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    raw = amplitude * _band_limited_field(grid, u.shape[-1], max_mode, rng)
    return project_tangent(u, raw)


def prepare(
    u0_raw: Field,
    u1_raw: Field,
    ws: SpectralWorkspace,
    smooth_modes: Optional[int] = None,
) -> State:
    """
    Make raw data admissible: optional spectral mollification, then retraction
    of u0 onto the sphere and projection of u1 onto the tangent spaces.

    Points already admissible to roundoff are left untouched, so the map is
    idempotent bit for bit when smooth_modes is None.

    Args:
        u0_raw: Position data, nowhere shorter than 1e-8
        u1_raw: Velocity data
        ws: Spectral workspace of the grid
        smooth_modes: Keep only Fourier modes up to this index

    Returns:
        State: Admissible data at t = 0

    Raises:
        DegenerateVector: if u0 cannot be retracted
    """
    ws.check(u0_raw)
    ws.check(u1_raw)
    u0, u1 = np.asarray(u0_raw, dtype=float), np.asarray(u1_raw, dtype=float)
    if smooth_modes is not None:
        u0 = ws.low_pass(u0, smooth_modes)
        u1 = ws.low_pass(u1, smooth_modes)

    on_sphere = np.abs(norm_sq(u0) - 1.0) <= ADMISSIBLE_TOL
    u0 = np.where(on_sphere[..., np.newaxis], u0, project_sphere(u0))
    tangent = np.abs(inner(u1, u0)) <= ADMISSIBLE_TOL * np.maximum(np.sqrt(norm_sq(u1)), 1e-300)
    u1 = np.where(tangent[..., np.newaxis], u1, project_tangent(u0, u1))
    return State(u=u0, v=u1, t=0.0)


def _unit(l_plus_1: int, index: int) -> np.ndarray:
    vector = np.zeros(l_plus_1)
    vector[index] = 1.0
    return vector


def build_initial_state(spec: InitialDataSpec, grid: GridSpec, l: int, ws: SpectralWorkspace) -> State:
    """
    Generate the initial state described by an InitialDataSpec.

    Args:
        spec: Generator name and parameters
        grid: The grid
        l: Sphere dimension
        ws: Spectral workspace of the grid

    Returns:
        State: Initial state
    """
    if spec.generator == Generator.GREAT_CIRCLE:
        p1 = np.asarray(spec.p1) if spec.p1 is not None else _unit(l + 1, 0)
        p2 = np.asarray(spec.p2) if spec.p2 is not None else _unit(l + 1, 1)
        omega = spec.omega if spec.omega is not None else dispersion_omega(grid, spec.k)
        logger.info(f"Great-circle data k={spec.k} omega={omega!r}")
        return great_circle_wave(grid, spec.k, omega, (p1, p2), spec.phase)

    rng = np.random.default_rng(spec.seed)
    u0 = random_sphere_field(grid, l, spec.max_mode, spec.amplitude, spec.seed, rng=rng)
    u1 = random_tangent_field(u0, grid, spec.max_mode, spec.velocity_amplitude, spec.seed, rng=rng)
    state = prepare(u0, u1, ws, spec.smooth_modes)
    if spec.normal_velocity:
        logger.warning(f"Adding normal velocity {spec.normal_velocity!r}: data violates tangency on purpose")
        state = State(u=state.u, v=state.v + spec.normal_velocity * state.u, t=0.0)
    logger.info(f"Random data seed={spec.seed} max_mode={spec.max_mode} amplitude={spec.amplitude!r}")
    return state
