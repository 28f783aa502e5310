"""
Error hierarchy for the biharmonic wave map simulator.
"""

from typing import Any, Optional


class BiwaveError(Exception):
    """Base class for all simulator errors."""


class ConfigError(BiwaveError):
    """Malformed or invalid simulation configuration."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeMismatch(BiwaveError):
    """A field does not match the grid of the workspace operating on it."""


class DegenerateVector(BiwaveError):
    """A vector too short to be retracted onto the sphere."""


class OffSphere(BiwaveError):
    """A field expected to be sphere-valued is not."""


class NonOrthonormalPlane(BiwaveError):
    """Great-circle plane vectors are not orthonormal."""


class StabilityViolation(BiwaveError):
    """Time step exceeds the linearized stability budget of an explicit scheme."""


class NonFinite(BiwaveError):
    """A time step produced non-finite values (blow-up)."""

    def __init__(self, t: float, last_good: Any = None):
        self.t = t
        self.last_good = last_good
        super().__init__(f"non-finite values produced at t={t!r}")


class ConvergenceFailure(BiwaveError):
    """Observed convergence order is below the accepted threshold."""
