"""
Pydantic models for simulation state and configuration of the biharmonic wave map simulator.
"""

import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field as PydanticField, field_validator, model_validator

# Vector fields have shape (*grid.points, l+1); scalar fields have shape grid.points.
Field = npt.NDArray[np.float64]
ScalarField = npt.NDArray[np.float64]


class Scheme(str, Enum):
    """Enum of available time integrators."""
    STRANG_SPLIT = "strang_split"
    VELOCITY_VERLET = "velocity_verlet"


class Variant(str, Enum):
    """Enum of equation variants."""
    STANDARD = "standard"
    TANGENTIAL_LAPLACIAN = "tangential_laplacian"


class Generator(str, Enum):
    """Enum of initial data generators."""
    GREAT_CIRCLE = "great_circle"
    RANDOM = "random"


class GridSpec(BaseModel):
    """Periodic rectangular grid on the torus."""
    model_config = ConfigDict(frozen=True)

    n: int
    points: Tuple[int, ...]
    lengths: Tuple[float, ...]

    @field_validator("n")
    @classmethod
    def _check_dimension(cls, value: int) -> int:
        if value not in (1, 2):
            raise ValueError(f"spatial dimension must be 1 or 2, got {value}")
        return value

    @field_validator("points")
    @classmethod
    def _check_points(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        for size in value:
            if size < 8 or size % 2:
                raise ValueError(f"grid sizes must be even and at least 8, got {size}")
        return value

    @field_validator("lengths")
    @classmethod
    def _check_lengths(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        for length in value:
            if not length > 0 or not math.isfinite(length):
                raise ValueError(f"axis lengths must be positive, got {length}")
        return value

    @model_validator(mode="after")
    def _check_axes(self) -> "GridSpec":
        if len(self.points) != self.n or len(self.lengths) != self.n:
            raise ValueError("points and lengths must have one entry per axis")
        return self

    @property
    def cell_volume(self) -> float:
        return float(np.prod([length / size for length, size in zip(self.lengths, self.points)]))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def spatial_axes(self) -> Tuple[int, ...]:
        return tuple(range(self.n))

    def refined(self, factor: int) -> "GridSpec":
        """Return the grid with every axis size multiplied by factor."""
        return GridSpec(n=self.n, points=tuple(size * factor for size in self.points), lengths=self.lengths)


class PenaltyParams(BaseModel):
    """Penalty strength and the transition interval of the cut-off function chi."""
    model_config = ConfigDict(frozen=True)

    epsilon: float
    chi_lo: float = 0.25
    chi_hi: float = 0.5

    @field_validator("epsilon")
    @classmethod
    def _check_epsilon(cls, value: float) -> float:
        if not value > 0 or not math.isfinite(value):
            raise ValueError(f"epsilon must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _check_transition(self) -> "PenaltyParams":
        # chi <= 1 and monotone blend need the transition to end at or below 1
        if not 0 < self.chi_lo < self.chi_hi <= 1:
            raise ValueError("need 0 < chi_lo < chi_hi <= 1")
        return self


class IntegratorConfig(BaseModel):
    """Time integrator settings."""
    model_config = ConfigDict(frozen=True)

    dt: float
    scheme: Scheme = Scheme.STRANG_SPLIT
    variant: Variant = Variant.STANDARD
    penalty: PenaltyParams
    dealias: bool = False

    @field_validator("dt")
    @classmethod
    def _check_dt(cls, value: float) -> float:
        if not value > 0 or not math.isfinite(value):
            raise ValueError(f"dt must be positive, got {value}")
        return value


class InitialDataSpec(BaseModel):
    """Descriptor of the initial data generator and its parameters."""
    model_config = ConfigDict(frozen=True)

    generator: Generator = Generator.RANDOM
    # great_circle
    k: Tuple[int, ...] = (1,)
    omega: Optional[float] = None
    phase: float = 0.0
    p1: Optional[Tuple[float, ...]] = None
    p2: Optional[Tuple[float, ...]] = None
    # random
    max_mode: int = 4
    amplitude: float = 0.3
    velocity_amplitude: float = 0.3
    normal_velocity: float = 0.0
    seed: int = 0
    smooth_modes: Optional[int] = None

    @field_validator("max_mode")
    @classmethod
    def _check_max_mode(cls, value: int) -> int:
        if value < 0:
            raise ValueError("max_mode must be nonnegative")
        return value


class OutputSpec(BaseModel):
    """Output locations."""
    model_config = ConfigDict(frozen=True)

    diagnostics: Optional[str] = None
    snapshots: Optional[str] = None


class SimConfig(BaseModel):
    """Fully resolved configuration of one simulation."""
    model_config = ConfigDict(frozen=True)

    grid: GridSpec
    l: int = 1
    integrator: IntegratorConfig
    initial: InitialDataSpec = PydanticField(default_factory=InitialDataSpec)
    T: float
    sample_every: int = 1
    output: OutputSpec = PydanticField(default_factory=OutputSpec)

    @field_validator("l")
    @classmethod
    def _check_target(cls, value: int) -> int:
        if value < 1:
            raise ValueError("target sphere dimension l must be at least 1")
        return value

    @field_validator("T")
    @classmethod
    def _check_final_time(cls, value: float) -> float:
        if not value > 0 or not math.isfinite(value):
            raise ValueError(f"T must be positive, got {value}")
        return value

    @field_validator("sample_every")
    @classmethod
    def _check_sample_every(cls, value: int) -> int:
        if value < 1:
            raise ValueError("sample_every must be at least 1")
        return value

    @model_validator(mode="after")
    def _check_initial(self) -> "SimConfig":
        if self.initial.generator == Generator.GREAT_CIRCLE and len(self.initial.k) != self.grid.n:
            raise ValueError("initial.k needs one integer per axis")
        for vector in (self.initial.p1, self.initial.p2):
            if vector is not None and len(vector) != self.l + 1:
                raise ValueError("plane vectors need l+1 components")
        return self

    @property
    def l_plus_1(self) -> int:
        return self.l + 1


class State(BaseModel):
    """Position u, velocity v and time t of a simulation."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    @model_validator(mode="after")
    def _check_shapes(self) -> "State":
        if self.u.shape != self.v.shape:
            raise ValueError(f"u and v shapes differ: {self.u.shape} vs {self.v.shape}")
        return self

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all())


class DiagnosticsRecord(BaseModel):
    """Scalar observables of a state at one time."""
    t: float
    energy_penalized: float
    energy_geometric: float
    penalty_mass: float
    constraint_l2: float
    constraint_linf: float
    charges: List[float] = PydanticField(default_factory=list)
    tangential_residual_l2: float = 0.0
    identity_gap_l2: float = 0.0
    energy_variant: Optional[float] = None
