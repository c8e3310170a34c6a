"""Multilinear image interpolation with analytic derivatives, and
transformation models: constant translations and nodal displacement fields.

Displacement convention: the transform is y(x) = x + u(x), so the zero
field is the identity.  Outside the image domain interpolated values fade
linearly to zero over the half-cell margin between the outermost sample
and the domain boundary.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass

import numpy as np

from .grid_image import Grid, Image

__all__ = [
    "DisplacementField",
    "TranslationParams",
    "interp",
    "warp",
    "translation_to_field",
    "prolong",
    "save_dfield",
    "load_dfield",
]

DFIELD_MAGIC = "DFIELD"


@dataclass(frozen=True)
class TranslationParams:
    """Constant shift in physical units (same units as grid spacing)."""

    shift: tuple[float, ...]

    def __post_init__(self):
        shift = tuple(float(s) for s in self.shift)
        if not all(np.isfinite(shift)):
            raise ValueError("shift components must be finite")
        object.__setattr__(self, "shift", shift)


@dataclass
class DisplacementField:
    """Per-node displacement vectors u, shape (n, d), row-major node order."""

    grid: Grid
    u: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        if u.shape != (self.grid.n, self.grid.d):
            raise ValueError(
                f"field shape {u.shape} does not match grid ({self.grid.n}, {self.grid.d})"
            )
        if not np.all(np.isfinite(u)):
            raise ValueError("displacement components must be finite")
        self.u = u

    @classmethod
    def zero(cls, grid: Grid) -> "DisplacementField":
        return cls(grid, np.zeros((grid.n, grid.d)))

    def copy(self) -> "DisplacementField":
        return DisplacementField(self.grid, self.u.copy())

    def mean_displacement(self) -> np.ndarray:
        return self.u.mean(axis=0)


def _index_coords(grid: Grid, points: np.ndarray) -> np.ndarray:
    """Physical points -> fractional sample indices (sample i at index i)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != grid.d:
        raise ValueError(f"points must be {grid.d}-vectors")
    origin = np.asarray(grid.origin)
    spacing = np.asarray(grid.spacing)
    return (pts - origin) / spacing - 0.5


def _interp_core(arr: np.ndarray, grid: Grid, points: np.ndarray, mode: str):
    """Shared multilinear kernel.

    mode 'fade': zero value outside the domain with a linear fade across the
    half-cell boundary margin (used for images).
    mode 'clamp': edge replication (used when transferring displacement
    fields between grids).
    Returns (values, jacobians) with jacobians = d value / d point.
    """
    d = grid.d
    s = _index_coords(grid, points)
    if not np.all(np.isfinite(s)):
        raise ValueError("interpolation points must be finite")
    npts = s.shape[0]
    dims = grid.dims
    spacing = np.asarray(grid.spacing)

    # per-axis effective coordinate and derivative scale d s'/d point
    coord = np.empty_like(s)
    scale = np.empty_like(s)
    for ax in range(d):
        m = dims[ax]
        sa = s[:, ax]
        if mode == "clamp":
            coord[:, ax] = np.clip(sa, 0.0, m - 1.0)
            inside = (sa > 0.0) & (sa < m - 1.0)
            scale[:, ax] = np.where(inside, 1.0 / spacing[ax], 0.0)
        else:
            # compress the exterior so the edge sample reaches zero half a
            # cell out, i.e. exactly at the domain boundary
            lo = sa < 0.0
            hi = sa > m - 1.0
            coord[:, ax] = np.where(lo, 2.0 * sa, np.where(hi, (m - 1.0) + 2.0 * (sa - (m - 1.0)), sa))
            scale[:, ax] = np.where(lo | hi, 2.0, 1.0) / spacing[ax]

    base = np.floor(coord).astype(np.int64)
    frac = coord - base

    flat = arr.ravel()
    strides = np.array([int(np.prod(dims[ax + 1 :], dtype=np.int64)) for ax in range(d)])

    values = np.zeros(npts)
    jac = np.zeros((npts, d))
    for corner in itertools.product((0, 1), repeat=d):
        idx = np.zeros(npts, dtype=np.int64)
        valid = np.ones(npts, dtype=bool)
        w_ax = []
        dw_ax = []
        for ax in range(d):
            ia = base[:, ax] + corner[ax]
            valid &= (ia >= 0) & (ia < dims[ax])
            idx += np.clip(ia, 0, dims[ax] - 1) * strides[ax]
            if corner[ax] == 0:
                w_ax.append(1.0 - frac[:, ax])
                dw_ax.append(-1.0)
            else:
                w_ax.append(frac[:, ax])
                dw_ax.append(1.0)
        sample = np.where(valid, flat[idx], 0.0)
        w = np.ones(npts)
        for ax in range(d):
            w = w * w_ax[ax]
        values += w * sample
        for j in range(d):
            wj = np.full(npts, dw_ax[j])
            for ax in range(d):
                if ax != j:
                    wj = wj * w_ax[ax]
            jac[:, j] += wj * sample * scale[:, j]
    return values, jac


def interp(image: Image, points) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation of a cell-centered image at arbitrary points.

    Returns (values, jacobians); jacobians are d value / d point, one
    d-vector per point.  Points outside the domain yield zero value and
    zero jacobian (with the boundary fade described in the module docs).
    """
    return _interp_core(image.array, image.grid, np.asarray(points, dtype=np.float64), "fade")


def warp(image: Image, field: DisplacementField) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate image at x + u(x) for every grid node.

    Returns (warped node values, interpolation jacobians), both in
    row-major node order.
    """
    if field.grid != image.grid:
        raise ValueError("displacement field and image must share one grid")
    points = image.grid.node_coords() + field.u
    return _interp_core(image.array, image.grid, points, "fade")


def translation_to_field(t: TranslationParams, grid: Grid) -> DisplacementField:
    """Constant displacement field u(x) = t."""
    shift = np.asarray(t.shift, dtype=np.float64)
    if shift.shape != (grid.d,):
        raise ValueError(f"shift must be a {grid.d}-vector")
    return DisplacementField(grid, np.tile(shift, (grid.n, 1)))


def prolong(field: DisplacementField, fine_grid: Grid) -> DisplacementField:
    """Transfer a coarse field to the next finer grid by componentwise
    multilinear interpolation (edge-replicated near the boundary)."""
    coarse = field.grid
    if fine_grid.d != coarse.d:
        raise ValueError("grid dimensionality mismatch")
    for ax in range(coarse.d):
        if -(-fine_grid.dims[ax] // 2) != coarse.dims[ax]:
            raise ValueError(
                f"axis {ax}: fine dim {fine_grid.dims[ax]} is not a refinement of {coarse.dims[ax]}"
            )
    pts = fine_grid.node_coords()
    u = np.empty((fine_grid.n, fine_grid.d))
    for c in range(coarse.d):
        comp = field.u[:, c].reshape(coarse.dims)
        u[:, c], _ = _interp_core(comp, coarse, pts, "clamp")
    return DisplacementField(fine_grid, u)


def save_dfield(field: DisplacementField, path) -> None:
    """Write the documented DFIELD format: ASCII header line
    "DFIELD d m1 ... md\\n", then n*d little-endian float64, node-major
    (row-major node order) with the d components of each node consecutive.
    """
    grid = field.grid
    header = " ".join([DFIELD_MAGIC, str(grid.d)] + [str(m) for m in grid.dims])
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        fh.write(field.u.astype("<f8").tobytes())


def load_dfield(path, grid: Grid | None = None) -> DisplacementField:
    """Read a DFIELD file; grid spacing/origin default to unit/zero unless
    a matching grid is supplied."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if not header or header[0] != DFIELD_MAGIC:
            raise ValueError("not a DFIELD file")
        d = int(header[1])
        dims = tuple(int(m) for m in header[2 : 2 + d])
        if len(dims) != d:
            raise ValueError("malformed DFIELD header")
        n = int(np.prod(dims))
        payload = fh.read(n * d * 8)
        if len(payload) != n * d * 8:
            raise ValueError("truncated DFIELD payload")
    u = np.frombuffer(payload, dtype="<f8").reshape(n, d).astype(np.float64)
    if grid is None:
        grid = Grid.unit(dims)
    elif grid.dims != dims:
        raise ValueError("DFIELD dims do not match the supplied grid")
    return DisplacementField(grid, u)
