"""Finite-difference image gradients and edge-parameter normalization.

The discrete gradient uses central differences on interior nodes and
one-sided differences on the boundary.  Each axis derivative is exposed as
a sparse linear operator so measure gradients can apply its transpose.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .grid_image import Grid, Image

__all__ = [
    "VectorField",
    "EdgeParameter",
    "gradient",
    "normalize",
    "gradient_matrix",
    "gradient_ops",
]


@dataclass(frozen=True)
class EdgeParameter:
    """Positive edge parameter separating gradient signal from noise."""

    eta: float

    def __post_init__(self):
        if not (self.eta > 0):
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class VectorField:
    """One d-vector per grid node, shape (n, d), row-major node order."""

    grid: Grid
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if vec.shape != (self.grid.n, self.grid.d):
            raise ValueError("vector array must have shape (n, d)")
        if not np.all(np.isfinite(vec)):
            raise ValueError("vector components must be finite")
        object.__setattr__(self, "vectors", vec)


def _diff_matrix_1d(m: int, h: float) -> sp.csr_matrix:
    """Central differences inside, one-sided at the two boundary nodes."""
    rows, cols, vals = [], [], []
    for i in range(m):
        if i == 0:
            rows += [0, 0]
            cols += [0, 1]
            vals += [-1.0 / h, 1.0 / h]
        elif i == m - 1:
            rows += [i, i]
            cols += [i - 1, i]
            vals += [-1.0 / h, 1.0 / h]
        else:
            rows += [i, i]
            cols += [i - 1, i + 1]
            vals += [-0.5 / h, 0.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


@lru_cache(maxsize=64)
def gradient_ops(grid: Grid) -> tuple[sp.csr_matrix, ...]:
    """Per-axis derivative operators acting on flattened node values."""
    ops = []
    for ax in range(grid.d):
        mats = [
            _diff_matrix_1d(grid.dims[a], grid.spacing[a]) if a == ax else sp.identity(grid.dims[a], format="csr")
            for a in range(grid.d)
        ]
        op = mats[0]
        for mat in mats[1:]:
            op = sp.kron(op, mat, format="csr")
        ops.append(op.tocsr())
    return tuple(ops)


def gradient_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Finite-difference gradient of flattened node values, shape (n, d)."""
    ops = gradient_ops(grid)
    out = np.empty((grid.n, grid.d))
    for ax, op in enumerate(ops):
        out[:, ax] = op @ values
    return out


def gradient(image: Image) -> VectorField:
    """Discrete spatial gradient of an image."""
    return VectorField(image.grid, gradient_array(image.values, image.grid))


def normalize_array(g: np.ndarray, eta: float) -> np.ndarray:
    """g / sqrt(|g|^2 + eta^2), rowwise; output norms lie in [0, 1)."""
    norm2 = np.sum(g * g, axis=-1, keepdims=True)
    return g / np.sqrt(norm2 + eta * eta)


def normalize(field: VectorField, eta: EdgeParameter | float) -> VectorField:
    eta_val = eta.eta if isinstance(eta, EdgeParameter) else float(eta)
    if not (eta_val > 0):
        raise ValueError("eta must be positive")
    return VectorField(field.grid, normalize_array(field.vectors, eta_val))


def gradient_matrix(fields: list[VectorField]) -> np.ndarray:
    """Stack T vector fields into per-node d-by-T matrices, shape (n, d, T)."""
    if len(fields) < 2:
        raise ValueError("need at least two fields")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields[1:]):
        raise ValueError("all fields must share one grid")
    return np.stack([f.vectors for f in fields], axis=-1)
