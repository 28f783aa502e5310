"""
Observables controlled by the analysis of the penalized system: energies,
Noether charges, constraint norms, penalty mass, sphere identities, the
rotation-generator frame, and residuals of the three equivalent equation forms.
"""

import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.linalg import expm

from src.core.field_ops import SpectralWorkspace, inner, integrate, l2_norm, norm_sq
from src.core.sphere_geometry import lagrange_multiplier, penalty, project_tangent
from src.exceptions import OffSphere, ShapeMismatch
from src.models.sim_models import (
    DiagnosticsRecord,
    Field,
    IntegratorConfig,
    PenaltyParams,
    ScalarField,
    State,
    Variant,
)

logger = logging.getLogger("biwave.core.diagnostics")

FRAME_TOL = 1e-8


class SkewGenerator(BaseModel):
    """Rotation generator Lambda_ij = e_i (x) e_j - e_j (x) e_i, 1-based indices i < j."""
    model_config = ConfigDict(frozen=True)

    i: int
    j: int
    l_plus_1: int

    @model_validator(mode="after")
    def _check_indices(self) -> "SkewGenerator":
        if not 1 <= self.i < self.j <= self.l_plus_1:
            raise ValueError(f"need 1 <= i < j <= {self.l_plus_1}, got ({self.i}, {self.j})")
        return self

    @property
    def label(self) -> str:
        return f"Q_{self.i}{self.j}"

    def apply(self, w: np.ndarray) -> np.ndarray:
        """Lambda_ij w = w^i e_j - w^j e_i over the trailing component axis."""
        result = np.zeros_like(w)
        result[..., self.j - 1] = w[..., self.i - 1]
        result[..., self.i - 1] = -w[..., self.j - 1]
        return result

    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.l_plus_1)).T

    def rotation(self, angle: float) -> np.ndarray:
        """exp(angle * Lambda_ij)."""
        return expm(angle * self.matrix())


def all_generators(l_plus_1: int) -> List[SkewGenerator]:
    """All l(l+1)/2 generators in lexicographic (i, j) order."""
    return [
        SkewGenerator(i=i, j=j, l_plus_1=l_plus_1)
        for i in range(1, l_plus_1 + 1)
        for j in range(i + 1, l_plus_1 + 1)
    ]


class Derivatives(NamedTuple):
    """Spatial derivatives of u shared by several observables."""

    lap: Field
    grads: Tuple[Field, ...]
    grad_sq: ScalarField


def derivatives(u: Field, ws: SpectralWorkspace) -> Derivatives:
    grads = ws.gradient(u)
    return Derivatives(lap=ws.laplacian(u), grads=grads, grad_sq=sum(norm_sq(g) for g in grads))


def energy_geometric(state: State, ws: SpectralWorkspace, d: Optional[Derivatives] = None) -> float:
    """E = 1/2 int |v|^2 + |Delta u|^2."""
    lap = ws.laplacian(state.u) if d is None else d.lap
    return 0.5 * integrate(norm_sq(state.v) + norm_sq(lap), ws.grid)


def penalty_mass(u: Field, p: PenaltyParams, ws: SpectralWorkspace) -> float:
    """int F(u)."""
    ws.check(u)
    return integrate(penalty(u, p), ws.grid)


def energy_penalized(state: State, p: PenaltyParams, ws: SpectralWorkspace, d: Optional[Derivatives] = None) -> float:
    """E_eps = E + (1/eps) int F(u)."""
    return energy_geometric(state, ws, d) + penalty_mass(state.u, p, ws) / p.epsilon


def energy_variant(state: State, p: PenaltyParams, ws: SpectralWorkspace, d: Optional[Derivatives] = None) -> float:
    """Conserved energy of the tangential-Laplacian variant: E_eps - 1/2 int |grad u|^4."""
    d = derivatives(state.u, ws) if d is None else d
    return energy_penalized(state, p, ws, d) - 0.5 * integrate(d.grad_sq ** 2, ws.grid)


def noether_charge(state: State, g: SkewGenerator, ws: SpectralWorkspace) -> float:
    """Q_Lambda = int <v, Lambda u>."""
    ws.check(state.u)
    return integrate(inner(state.v, g.apply(state.u)), ws.grid)


def all_charges(state: State, ws: SpectralWorkspace) -> List[float]:
    return [noether_charge(state, g, ws) for g in all_generators(state.u.shape[-1])]


def constraint_norms(u: Field, ws: SpectralWorkspace) -> Tuple[float, float]:
    """L2 and Linf norms of |u|^2 - 1."""
    ws.check(u)
    deviation = norm_sq(u) - 1.0
    return l2_norm(deviation, ws.grid), float(np.max(np.abs(deviation)))


class SphereIdentityGaps(NamedTuple):
    identity_gap_l2: float
    ineq_violation: float
    tangency_gap: float


def sphere_identities(u: Field, v: Field, ws: SpectralWorkspace, d: Optional[Derivatives] = None) -> SphereIdentityGaps:
    """
    Gaps in <Delta u, u> = -|grad u|^2, |grad u|^2 <= |Delta u| and <v, u> = 0.

    Off-sphere inputs simply report nonzero gaps.
    """
    ws.check(v)
    d = derivatives(u, ws) if d is None else d
    identity = inner(d.lap, u) + d.grad_sq
    violation = np.maximum(0.0, d.grad_sq - np.sqrt(norm_sq(d.lap)))
    return SphereIdentityGaps(
        identity_gap_l2=l2_norm(identity, ws.grid),
        ineq_violation=float(np.max(violation)),
        tangency_gap=l2_norm(inner(v, u), ws.grid),
    )


class FrameDecomposition(NamedTuple):
    normal: ScalarField
    # coeffs[m] belongs to all_generators(l+1)[m]
    coeffs: np.ndarray


def frame_decompose(u: Field, phi: Field, tol: float = FRAME_TOL) -> FrameDecomposition:
    """
    Split phi into <phi, u> u plus tangent part sum phi_ij Lambda_ij u.

    phi_ij = u^i (phi^j - <phi,u> u^j) - u^j (phi^i - <phi,u> u^i).

    Raises:
        OffSphere: if some | |u| - 1 | > tol
    """
    if u.shape != phi.shape:
        raise ShapeMismatch(f"frame operands differ: {u.shape} vs {phi.shape}")
    off = np.abs(np.sqrt(norm_sq(u)) - 1.0)
    if np.any(off > tol):
        raise OffSphere(f"frame decomposition needs |u| = 1, max deviation {float(np.max(off)):.3e}")
    normal = inner(phi, u)
    tangent = phi - normal[..., np.newaxis] * u
    coeffs = np.stack(
        [
            u[..., g.i - 1] * tangent[..., g.j - 1] - u[..., g.j - 1] * tangent[..., g.i - 1]
            for g in all_generators(u.shape[-1])
        ]
    )
    return FrameDecomposition(normal=normal, coeffs=coeffs)


def frame_reassemble(u: Field, normal: ScalarField, coeffs: np.ndarray) -> Field:
    """Inverse of frame_decompose."""
    result = normal[..., np.newaxis] * u
    for coeff, g in zip(coeffs, all_generators(u.shape[-1])):
        result = result + coeff[..., np.newaxis] * g.apply(u)
    return result


class ResidualReport(NamedTuple):
    geometric_l2: float
    pde_l2: float
    divergence_form_l2: float


def equation_force(
    u: Field,
    a: Field,
    ws: SpectralWorkspace,
    variant: Variant = Variant.STANDARD,
    d: Optional[Derivatives] = None,
) -> Tuple[Field, Optional[List[Field]]]:
    """
    a + Delta^2 u (+ 2 Div(|grad u|^2 grad u) for the variant).

    Returns the force together with the variant flux |grad u|^2 grad u per
    axis, or None for the standard equation.
    """
    force = a + ws.bilaplacian(u)
    if variant != Variant.TANGENTIAL_LAPLACIAN:
        return force, None
    d = derivatives(u, ws) if d is None else d
    flux = [d.grad_sq[..., np.newaxis] * g for g in d.grads]
    return force + 2.0 * ws.divergence(flux), flux


def residual_equations(
    u: Field,
    v: Field,
    a: Field,
    p: Optional[PenaltyParams],
    ws: SpectralWorkspace,
    variant: Variant = Variant.STANDARD,
) -> ResidualReport:
    """
    Residuals of the geometric, PDE and divergence forms of the constrained equation.

    For the tangential-Laplacian variant the force 2 Div(|grad u|^2 grad u), its
    multiplier and the extra flux 2 Div <|grad u|^2 grad u, Lambda u> are included.

    Args:
        u: Sphere-valued position
        v: Velocity
        a: Acceleration estimate (d_t v)
        p: Penalty parameters; grad F vanishes on the sphere and does not enter
        ws: Spectral workspace
        variant: Equation variant

    Returns:
        ResidualReport: L2 norms of the three residuals
    """
    ws.check(u)
    if v.shape != u.shape or a.shape != u.shape:
        raise ShapeMismatch("residual operands must share one shape")
    d = derivatives(u, ws)
    force, extra_flux = equation_force(u, a, ws, variant, d)

    geometric = l2_norm(project_tangent(u, force), ws.grid)
    multiplier = lagrange_multiplier(u, v, ws, variant)
    pde = l2_norm(force - multiplier[..., np.newaxis] * u, ws.grid)

    total = 0.0
    for g in all_generators(u.shape[-1]):
        lam_u = g.apply(u)
        density = (
            inner(a, lam_u)
            + ws.laplacian(inner(d.lap, lam_u))
            - 2.0 * ws.div_contraction(d.lap, d.grads, weight=g.matrix())
        )
        if extra_flux is not None:
            density = density + 2.0 * ws.divergence([inner(flux, lam_u) for flux in extra_flux])
        total += l2_norm(density, ws.grid) ** 2
    return ResidualReport(geometric_l2=geometric, pde_l2=pde, divergence_form_l2=float(np.sqrt(total)))


class ActionDensities(NamedTuple):
    phi_density: ScalarField
    psi_density: ScalarField


def action_densities(u: Field, v: Field, ws: SpectralWorkspace) -> ActionDensities:
    """Lagrangian densities 1/2(|v|^2 - |Delta u|^2) and 1/2(|v|^2 - |Delta u|^2 + |grad u|^4)."""
    ws.check(v)
    grad_sq = sum(norm_sq(g) for g in ws.gradient(u))
    phi_density = 0.5 * (norm_sq(v) - norm_sq(ws.laplacian(u)))
    return ActionDensities(phi_density=phi_density, psi_density=phi_density + 0.5 * grad_sq ** 2)


def weak_form_pairing(u: Field, v: Field, a: Field, phi: Field, ws: SpectralWorkspace) -> Tuple[float, float]:
    """
    Both sides of the fixed-time weak form of the PDE tested against phi.

    lhs = int <a, phi> + <Delta u, Delta phi>
    rhs = int (|Delta u|^2 - |v|^2) <u, phi> - |grad u|^2 Delta <u, phi> + 2 <Delta u, grad u> . grad <u, phi>
    """
    lap = ws.laplacian(u)
    grads = ws.gradient(u)
    grad_sq = sum(norm_sq(g) for g in grads)
    u_phi = inner(u, phi)
    lhs = integrate(inner(a, phi) + inner(lap, ws.laplacian(phi)), ws.grid)
    coupling = sum(inner(lap, g) * d for g, d in zip(grads, ws.gradient(u_phi)))
    rhs = integrate(
        (norm_sq(lap) - norm_sq(v)) * u_phi - grad_sq * ws.laplacian(u_phi) + 2.0 * coupling,
        ws.grid,
    )
    return lhs, rhs


def rotate_state(state: State, g: SkewGenerator, angle: float) -> State:
    """Apply the rigid target rotation exp(angle Lambda) to u and v."""
    rotation = g.rotation(angle)
    return State(u=state.u @ rotation.T, v=state.v @ rotation.T, t=state.t)


def centered_acceleration(prev: State, nxt: State) -> Field:
    """(v(t+dt) - v(t-dt)) / (2 dt) from the neighbouring frames."""
    return (nxt.v - prev.v) / (nxt.t - prev.t)


def compute_record(
    state: State,
    prev: State,
    nxt: State,
    cfg: IntegratorConfig,
    ws: SpectralWorkspace,
) -> DiagnosticsRecord:
    """
    Assemble the diagnostics record of state.

    The tangential residual uses the centered acceleration of the neighbouring
    frames and the tangent spaces at u/|u|.
    """
    p = cfg.penalty
    u = state.u
    d = derivatives(u, ws)

    geometric = energy_geometric(state, ws, d)
    mass = penalty_mass(u, p, ws)
    l2, linf = constraint_norms(u, ws)
    force, _ = equation_force(u, centered_acceleration(prev, nxt), ws, cfg.variant, d)
    variant_energy = None
    if cfg.variant == Variant.TANGENTIAL_LAPLACIAN:
        variant_energy = energy_variant(state, p, ws, d)
    base = u / np.sqrt(np.maximum(norm_sq(u), 1e-300))[..., np.newaxis]

    return DiagnosticsRecord(
        t=state.t,
        energy_penalized=geometric + mass / p.epsilon,
        energy_geometric=geometric,
        penalty_mass=mass,
        constraint_l2=l2,
        constraint_linf=linf,
        charges=all_charges(state, ws),
        tangential_residual_l2=l2_norm(project_tangent(base, force), ws.grid),
        identity_gap_l2=sphere_identities(u, state.v, ws, d).identity_gap_l2,
        energy_variant=variant_energy,
    )
