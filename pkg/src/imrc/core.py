"""Shared value types, grid indexing, configuration and errors.

Points, directions and colors are plain ``float64`` numpy arrays of shape
``(3,)`` (or ``(N, 3)`` for batches). Grid indices are ``(ix, iy, iz)``
tuples with x varying fastest in linear order.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

MAX_SH_DEGREE = 4


class ImrcError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateDirectionError(ImrcError, ValueError):
    pass


class GridBoundsError(ImrcError, IndexError):
    pass


class NoObservationError(ImrcError):
    pass


class DegenerateFieldError(ImrcError):
    pass


class DegenerateResultError(ImrcError):
    pass


class LoadError(ImrcError):
    pass


class SearchError(ImrcError):
    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class NoSurfaceError(ImrcError):
    pass


def vec3(x, y=None, z=None):
    """Build a finite float64 3-vector from a sequence or three scalars."""
    if y is None and z is None:
        v = np.asarray(x, dtype=np.float64).reshape(3)
    else:
        v = np.array([x, y, z], dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def normalize(v):
    """Return ``v / |v|``; raises :class:`DegenerateDirectionError` for zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.sqrt(np.dot(v, v)))
    if not n > 0.0 or not np.isfinite(n):
        raise DegenerateDirectionError(f"cannot normalize vector {v}")
    return v / n


def linear_index(idx, resolution):
    ix, iy, iz = (int(i) for i in idx)
    nx, ny, nz = (int(n) for n in resolution)
    if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
        raise GridBoundsError(f"index {tuple(idx)} outside resolution {tuple(resolution)}")
    return ix + nx * (iy + ny * iz)


def grid_index(linear, resolution):
    """Inverse of :func:`linear_index`."""
    nx, ny, nz = (int(n) for n in resolution)
    linear = int(linear)
    if not 0 <= linear < nx * ny * nz:
        raise GridBoundsError(f"linear index {linear} outside resolution {tuple(resolution)}")
    ix = linear % nx
    iy = (linear // nx) % ny
    iz = linear // (nx * ny)
    return ix, iy, iz


@dataclass(frozen=True)
class EvalConfig:
    """Metric settings.

    ``ray_step=None`` means half the minimum voxel edge of the evaluated
    volume; see :meth:`resolve_step`.
    """

    sh_degree: int = 2
    ray_step: Optional[float] = None
    skip_alpha_eps: float = 1e-7
    min_confidence_eps: float = 1e-6

    def __post_init__(self):
        if not 0 <= self.sh_degree <= MAX_SH_DEGREE:
            raise ValueError(f"sh_degree must be in [0, {MAX_SH_DEGREE}], got {self.sh_degree}")
        if self.ray_step is not None and not self.ray_step > 0:
            raise ValueError(f"ray_step must be > 0, got {self.ray_step}")

    def resolve_step(self, volume) -> float:
        if self.ray_step is not None:
            return float(self.ray_step)
        return 0.5 * float(np.min(volume.spacing))


Resolution = Tuple[int, int, int]
