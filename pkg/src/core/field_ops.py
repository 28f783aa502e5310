"""
Periodic-grid fields and spectral differential operators.

Fields are float64 arrays of shape (*grid.points, l+1), grid-major with the
target components contiguous per point; scalar fields have shape grid.points.
All operators act on the spatial axes only and use real-to-complex transforms.
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft as sfft

from src.config import get_fft_workers
from src.exceptions import ShapeMismatch
from src.models.sim_models import Field, GridSpec, ScalarField

logger = logging.getLogger("biwave.core.field_ops")


def inner(a: np.ndarray, b: np.ndarray) -> ScalarField:
    """Pointwise contraction of the trailing component axis."""
    return np.einsum("...c,...c->...", a, b)


def norm_sq(a: np.ndarray) -> ScalarField:
    """Pointwise squared Euclidean norm of the trailing component axis."""
    return inner(a, a)


def integrate(s: np.ndarray, grid: GridSpec) -> Union[float, np.ndarray]:
    """
    Rectangle-rule integral over the torus.

    Scalar fields give a float, vector fields the array of component integrals.

    Args:
        s: Scalar field or vector field on grid
        grid: The grid s is sampled on

    Returns:
        The integral (cell volume times grid sum)
    """
    total = np.sum(s, axis=grid.spatial_axes) * grid.cell_volume
    if np.ndim(total) == 0:
        return float(total)
    return total


def l2_norm(s: np.ndarray, grid: GridSpec) -> float:
    """Grid-quadrature L2 norm of a scalar or vector field."""
    squared = s * s if s.ndim == grid.n else norm_sq(s)
    return float(np.sqrt(integrate(squared, grid)))


def grid_coordinates(grid: GridSpec) -> Tuple[np.ndarray, ...]:
    """Physical coordinates of the grid points, one broadcastable array per axis."""
    axes = [np.arange(size) * (length / size) for size, length in zip(grid.points, grid.lengths)]
    return tuple(np.meshgrid(*axes, indexing="ij"))


class SpectralWorkspace:
    """
    Wavenumbers and transforms for one grid.

    Holds per-grid multiplier tables; not safe for simultaneous use by several
    workers. Each simulation owns one workspace.
    """

    def __init__(self, grid: GridSpec, workers: Optional[int] = None):
        """
        Initialize the workspace for a grid.

        Args:
            grid: The periodic grid
            workers: scipy.fft worker count (defaults to BIWAVE_THREADS)
        """
        self.grid = grid
        self.workers = workers if workers is not None else get_fft_workers()
        self.axes = grid.spatial_axes
        n = grid.n

        self.wavenumbers = []
        self.mode_indices = []
        self._ik = []
        for axis, (size, length) in enumerate(zip(grid.points, grid.lengths)):
            last = axis == n - 1
            index = np.fft.rfftfreq(size, d=1.0 / size) if last else np.fft.fftfreq(size, d=1.0 / size)
            xi = 2.0 * np.pi * index / length
            shape = [1] * n
            shape[axis] = xi.size
            self.wavenumbers.append(xi)
            self.mode_indices.append(np.abs(index).reshape(shape))
            # odd derivatives drop the Nyquist mode
            xi_odd = np.where(np.abs(index) == size // 2, 0.0, xi)
            self._ik.append((1j * xi_odd).reshape(shape))

        self.k2 = sum((xi.reshape(ik.shape) ** 2 for xi, ik in zip(self.wavenumbers, self._ik)))
        self.k4 = self.k2 ** 2
        logger.debug(f"Spectral workspace for points={grid.points} lengths={grid.lengths} workers={self.workers}")

    @property
    def max_k4(self) -> float:
        return float(np.max(self.k4))

    @property
    def spectral_shape(self) -> Tuple[int, ...]:
        return tuple(self.k2.shape)

    def check(self, u: np.ndarray) -> None:
        """Raise ShapeMismatch unless u is a scalar or vector field on this grid."""
        if tuple(u.shape[: self.grid.n]) != tuple(self.grid.points) or u.ndim not in (self.grid.n, self.grid.n + 1):
            raise ShapeMismatch(f"field of shape {u.shape} does not live on grid {self.grid.points}")

    def _mult(self, multiplier: np.ndarray, uhat: np.ndarray) -> np.ndarray:
        # broadcast the spatial multiplier over a trailing component axis
        if uhat.ndim == self.grid.n + 1:
            multiplier = multiplier[..., np.newaxis]
        return multiplier * uhat

    def forward(self, u: np.ndarray) -> np.ndarray:
        self.check(u)
        return sfft.rfftn(u, axes=self.axes, workers=self.workers)

    def backward(self, uhat: np.ndarray) -> np.ndarray:
        return sfft.irfftn(uhat, s=self.grid.points, axes=self.axes, workers=self.workers)

    def gradient(self, u: np.ndarray) -> Tuple[np.ndarray, ...]:
        """Return (d_1 u, ..., d_n u)."""
        uhat = self.forward(u)
        return tuple(self.backward(self._mult(ik, uhat)) for ik in self._ik)

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        return self.backward(self._mult(-self.k2, self.forward(u)))

    def bilaplacian(self, u: np.ndarray) -> np.ndarray:
        return self.backward(self._mult(self.k4, self.forward(u)))

    def divergence(self, fields: Sequence[np.ndarray]) -> np.ndarray:
        """Return sum_i d_i fields[i] using a single inverse transform."""
        if len(fields) != self.grid.n:
            raise ShapeMismatch(f"expected {self.grid.n} fields, got {len(fields)}")
        total = sum(self._mult(ik, self.forward(f)) for ik, f in zip(self._ik, fields))
        return self.backward(total)

    def div_contraction(
        self,
        a: Field,
        b: Sequence[Field],
        weight: Optional[np.ndarray] = None,
    ) -> ScalarField:
        """
        Compute sum_i d_i <a, W b_i>.

        The component contraction is taken pointwise first, then differentiated
        spectrally.

        Args:
            a: Vector field
            b: One vector field per axis
            weight: Optional (l+1)x(l+1) matrix W (identity if omitted)

        Returns:
            Scalar field
        """
        self.check(a)
        for field in b:
            if field.shape != a.shape:
                raise ShapeMismatch(f"contraction operands differ: {a.shape} vs {field.shape}")
        if weight is None:
            contractions = [inner(a, field) for field in b]
        else:
            contractions = [inner(a, field @ weight.T) for field in b]
        return self.divergence(contractions)

    def low_pass(self, u: np.ndarray, modes: int) -> np.ndarray:
        """Zero every Fourier mode whose index exceeds modes on some axis."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        for index in self.mode_indices:
            mask = mask & (index <= modes)
        return self.backward(self._mult(mask.astype(float), self.forward(u)))

    def dealias(self, u: np.ndarray) -> np.ndarray:
        """2/3-rule low pass."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        for index, size in zip(self.mode_indices, self.grid.points):
            mask = mask & (index < size / 3.0)
        return self.backward(self._mult(mask.astype(float), self.forward(u)))
