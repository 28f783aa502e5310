"""
Target-sphere geometry and the penalty potential.

chi is the smooth cut-off of the penalty, F(y) = chi((|y|^2 - 1)^2) vanishes
exactly on the sphere and has compactly supported derivatives. All functions
are vectorized over leading grid axes with the target components last.
"""

import logging
from typing import Union

import numpy as np

from src.core.field_ops import SpectralWorkspace, inner, norm_sq
from src.exceptions import DegenerateVector
from src.models.sim_models import Field, PenaltyParams, ScalarField, Variant

logger = logging.getLogger("biwave.core.sphere_geometry")

DEFAULT_RETRACTION_TOL = 1e-8

ArrayLike = Union[float, np.ndarray]


def _bump(t: np.ndarray) -> np.ndarray:
    """exp(-1/t) for t > 0, else 0."""
    positive = t > 0
    safe = np.where(positive, t, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def _bump_prime(t: np.ndarray) -> np.ndarray:
    positive = t > 0
    safe = np.where(positive, t, 1.0)
    return np.where(positive, np.exp(-1.0 / safe) / safe ** 2, 0.0)


def _step(t: np.ndarray) -> np.ndarray:
    """Smooth step sigma(t) = f(t) / (f(t) + f(1-t)): 0 for t <= 0, 1 for t >= 1."""
    a, b = _bump(t), _bump(1.0 - t)
    return a / (a + b)


def _step_prime(t: np.ndarray) -> np.ndarray:
    a, b = _bump(t), _bump(1.0 - t)
    da, db = _bump_prime(t), _bump_prime(1.0 - t)
    return (da * b + a * db) / (a + b) ** 2


def _check_nonnegative(s: np.ndarray) -> None:
    if np.any(s < 0):
        raise ValueError("chi is defined on [0, inf) only")


def chi(s: ArrayLike, p: PenaltyParams) -> ArrayLike:
    """
    Smooth nondecreasing cut-off: s below chi_lo, 1 above chi_hi.

    On the transition interval chi(s) = s + (1 - s) * sigma((s - lo) / (hi - lo)).

    Args:
        s: Nonnegative argument(s)
        p: Penalty parameters holding the transition interval

    Returns:
        chi(s), same shape as s
    """
    s_arr = np.asarray(s, dtype=float)
    _check_nonnegative(s_arr)
    t = (s_arr - p.chi_lo) / (p.chi_hi - p.chi_lo)
    blend = s_arr + (1.0 - s_arr) * _step(np.clip(t, 0.0, 1.0))
    result = np.where(s_arr <= p.chi_lo, s_arr, np.where(s_arr >= p.chi_hi, 1.0, blend))
    return float(result) if result.ndim == 0 else result


def chi_prime(s: ArrayLike, p: PenaltyParams) -> ArrayLike:
    """Derivative of chi."""
    s_arr = np.asarray(s, dtype=float)
    _check_nonnegative(s_arr)
    width = p.chi_hi - p.chi_lo
    t = np.clip((s_arr - p.chi_lo) / width, 0.0, 1.0)
    blend = 1.0 - _step(t) + (1.0 - s_arr) * _step_prime(t) / width
    result = np.where(s_arr <= p.chi_lo, 1.0, np.where(s_arr >= p.chi_hi, 0.0, blend))
    return float(result) if result.ndim == 0 else result


def penalty(y: np.ndarray, p: PenaltyParams) -> ArrayLike:
    """F(y) = chi((|y|^2 - 1)^2) over the trailing component axis."""
    deviation = norm_sq(np.asarray(y, dtype=float)) - 1.0
    return chi(deviation ** 2, p)


def grad_penalty(y: np.ndarray, p: PenaltyParams) -> np.ndarray:
    """grad F(y) = 4 chi'((|y|^2 - 1)^2) (|y|^2 - 1) y, always radial."""
    y = np.asarray(y, dtype=float)
    deviation = norm_sq(y) - 1.0
    scale = 4.0 * np.asarray(chi_prime(deviation ** 2, p)) * deviation
    return scale[..., np.newaxis] * y


def project_sphere(y: np.ndarray, tol: float = DEFAULT_RETRACTION_TOL) -> np.ndarray:
    """
    Retraction y / |y| onto the sphere.

    Raises:
        DegenerateVector: if some |y| < tol
    """
    y = np.asarray(y, dtype=float)
    norms = np.sqrt(norm_sq(y))
    if np.any(norms < tol):
        raise DegenerateVector(f"cannot retract vector of norm {float(np.min(norms)):.3e} < {tol:.1e}")
    return y / norms[..., np.newaxis]


def project_tangent(base: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Orthogonal projection of w onto the tangent space at the sphere point base."""
    base = np.asarray(base, dtype=float)
    w = np.asarray(w, dtype=float)
    return w - inner(w, base)[..., np.newaxis] * base


def lagrange_multiplier(
    u: Field,
    v: Field,
    ws: SpectralWorkspace,
    variant: Variant = Variant.STANDARD,
) -> ScalarField:
    """
    Multiplier lambda_u of the PDE form (d_t^2 + Delta^2) u = lambda_u u.

    lambda_u = |Delta u|^2 - |v|^2 - Delta |grad u|^2 - 2 Div <Delta u, grad u>,
    minus 2 |grad u|^4 for the tangential-Laplacian variant.

    Args:
        u: Sphere-valued position field
        v: Velocity field
        ws: Spectral workspace of the grid
        variant: Equation variant

    Returns:
        Scalar field lambda_u
    """
    ws.check(v)
    lap = ws.laplacian(u)
    grads = ws.gradient(u)
    grad_sq = sum(norm_sq(g) for g in grads)
    multiplier = norm_sq(lap) - norm_sq(v) - ws.laplacian(grad_sq) - 2.0 * ws.div_contraction(lap, grads)
    if variant == Variant.TANGENTIAL_LAPLACIAN:
        multiplier = multiplier - 2.0 * grad_sq ** 2
    return multiplier
