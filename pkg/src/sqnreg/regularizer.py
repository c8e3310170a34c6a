"""Curvature regularizer: 1/2 * integral (Laplacian u)^2 on displacements.

The discrete Laplacian is the h-scaled 2d+1-point stencil with replicate
(Neumann-like) boundary padding, so constant displacements are free and
the identity transform carries zero penalty.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid_image import Grid
from .interp_transform import DisplacementField

__all__ = ["RegularizerConfig", "curvature", "laplacian_op"]


@dataclass(frozen=True)
class RegularizerConfig:
    """Weight alpha multiplying the curvature penalty."""

    alpha: float = 0.1

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ValueError("alpha must be positive")


def _laplacian_1d(m: int, h: float) -> sp.csr_matrix:
    """Second difference with replicate padding (ghost = edge value)."""
    rows, cols, vals = [], [], []
    inv_h2 = 1.0 / (h * h)
    for i in range(m):
        left = max(i - 1, 0)
        right = min(i + 1, m - 1)
        rows += [i, i, i]
        cols += [left, i, right]
        vals += [inv_h2, -2.0 * inv_h2, inv_h2]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    mat.sum_duplicates()
    return mat


@lru_cache(maxsize=64)
def laplacian_op(grid: Grid) -> sp.csr_matrix:
    """Discrete Laplacian on flattened node values."""
    op = None
    for ax in range(grid.d):
        mats = [
            _laplacian_1d(grid.dims[a], grid.spacing[a]) if a == ax else sp.identity(grid.dims[a], format="csr")
            for a in range(grid.d)
        ]
        term = mats[0]
        for mat in mats[1:]:
            term = sp.kron(term, mat, format="csr")
        op = term if op is None else op + term
    return op.tocsr()


@lru_cache(maxsize=32)
def smoothing_solver(grid: Grid, weight: float, delta: float):
    """Factorized solve of (weight * L1^T L1 + delta * I) with the
    index-spaced (h = 1) Laplacian L1.

    Used as a Sobolev smoothing preconditioner for quasi-Newton search
    directions.  Index spacing keeps the smoothing strength the same on
    every pyramid level; the small delta screens the constant kernel so
    translation-like modes get the largest steps.
    """
    index_grid = Grid.unit(grid.dims)
    L = laplacian_op(index_grid)
    H = weight * (L.T @ L) + delta * sp.identity(grid.n, format="csr")
    return spla.splu(H.tocsc())


def curvature(field: DisplacementField) -> tuple[float, np.ndarray]:
    """Value 1/2 * vol * sum (L u_c)^2 and gradient vol * L^T L u, shape (n, d)."""
    grid = field.grid
    if any(m < 3 for m in grid.dims):
        raise ValueError("curvature needs at least 3 nodes per axis")
    L = laplacian_op(grid)
    vol = grid.cell_volume
    value = 0.0
    grad = np.empty_like(field.u)
    for c in range(grid.d):
        lu = L @ field.u[:, c]
        value += 0.5 * vol * float(np.dot(lu, lu))
        grad[:, c] = vol * (L.T @ lu)
    return value, grad
