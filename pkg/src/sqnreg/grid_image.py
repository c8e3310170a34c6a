"""Regular-grid image containers, stacks, coarsening pyramid, and PGM I/O.

Grids are cell-centered: sample i of an axis with spacing h and origin o
sits at o + (i + 1/2) * h.  Intensities are kept as float64 in [0, 255];
quantization happens only when writing PGM files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "Image",
    "ImageStack",
    "PyramidLevel",
    "PgmError",
    "load_pgm",
    "save_pgm",
    "restrict",
    "build_pyramid",
]


class PgmError(ValueError):
    """Malformed or unsupported PGM input."""


@dataclass(frozen=True)
class Grid:
    """Regular cell-centered grid: dims (m_1..m_d), spacing, origin."""

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.dims) == len(self.spacing) == len(self.origin)):
            raise ValueError("dims, spacing and origin must have equal length")
        if len(self.dims) == 0:
            raise ValueError("grid needs at least one axis")
        if any(int(m) < 2 for m in self.dims):
            raise ValueError("all dims must be >= 2")
        if any(not (h > 0) for h in self.spacing):
            raise ValueError("all spacings must be positive")
        object.__setattr__(self, "dims", tuple(int(m) for m in self.dims))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def unit(cls, dims) -> "Grid":
        """Grid with unit spacing and zero origin."""
        dims = tuple(int(m) for m in dims)
        return cls(dims, (1.0,) * len(dims), (0.0,) * len(dims))

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self, ax: int) -> np.ndarray:
        m, h, o = self.dims[ax], self.spacing[ax], self.origin[ax]
        return o + (np.arange(m) + 0.5) * h

    def node_coords(self) -> np.ndarray:
        """All cell-center positions, row-major, shape (n, d)."""
        axes = [self.axis_coords(ax) for ax in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class Image:
    """Scalar image on a Grid; values are row-major float64, length grid.n."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if values.size != self.grid.n:
            raise ValueError(
                f"value count {values.size} does not match grid size {self.grid.n}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("image values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, arr, spacing=None, origin=None) -> "Image":
        arr = np.asarray(arr, dtype=np.float64)
        d = arr.ndim
        grid = Grid(
            arr.shape,
            tuple(spacing) if spacing is not None else (1.0,) * d,
            tuple(origin) if origin is not None else (0.0,) * d,
        )
        return cls(grid, arr.ravel())

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.grid.dims)


@dataclass(frozen=True)
class ImageStack:
    """Temporal sequence of T >= 2 images sharing one grid."""

    frames: tuple[Image, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise ValueError("an image stack needs at least two frames")
        grid = frames[0].grid
        if any(f.grid != grid for f in frames[1:]):
            raise ValueError("all frames must share one grid")
        object.__setattr__(self, "frames", frames)

    @property
    def grid(self) -> Grid:
        return self.frames[0].grid

    @property
    def T(self) -> int:
        return len(self.frames)

    def permuted(self, order) -> "ImageStack":
        return ImageStack(tuple(self.frames[i] for i in order))


@dataclass(frozen=True)
class PyramidLevel:
    """One coarsening level; level 0 is the finest (input) resolution."""

    level: int
    stack: ImageStack

    @property
    def grid(self) -> Grid:
        return self.stack.grid


def load_pgm(path) -> Image:
    """Read a binary (P5) PGM file with maxval <= 255."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise PgmError("malformed header: unexpected end of file")
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    # exactly one whitespace byte separates maxval from the payload
    pos += 1

    if tokens[0] != b"P5":
        raise PgmError(f"unsupported format: magic {tokens[0]!r}, expected P5")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise PgmError(f"malformed header: non-numeric field in {tokens[1:4]}") from exc
    if width < 2 or height < 2:
        raise PgmError(f"malformed header: image size {width}x{height} too small")
    if maxval > 255:
        raise PgmError(f"unsupported maxval {maxval} (only maxval <= 255)")
    if maxval <= 0:
        raise PgmError(f"malformed header: maxval {maxval}")

    payload = data[pos : pos + width * height]
    if len(payload) < width * height:
        raise PgmError(
            f"truncated payload: expected {width * height} bytes, got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    # PGM stores rows (height) top to bottom; axis 0 = row
    return Image(Grid.unit((height, width)), values)


def save_pgm(image: Image, path) -> None:
    """Write a binary (P5) PGM; values are clamped to [0, 255] and rounded.

    Rounding is round-half-up so the quantization is platform independent.
    """
    if image.grid.d != 2:
        raise ValueError("PGM output requires a 2-d image")
    vals = np.clip(image.values, 0.0, 255.0)
    quant = np.floor(vals + 0.5).astype(np.uint8)
    height, width = image.grid.dims
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(quant.tobytes())


def _pair_average(arr: np.ndarray, axis: int) -> np.ndarray:
    """Average consecutive pairs along one axis; a trailing odd sample
    becomes its own coarse cell."""
    m = arr.shape[axis]
    arr = np.moveaxis(arr, axis, 0)
    if m % 2 == 0:
        out = 0.5 * (arr[0::2] + arr[1::2])
    else:
        out = np.empty((m // 2 + 1,) + arr.shape[1:], dtype=arr.dtype)
        out[:-1] = 0.5 * (arr[0:-1:2] + arr[1::2])
        out[-1] = arr[-1]
    return np.moveaxis(out, 0, axis)


def restrict(image: Image) -> Image:
    """Coarsen by cell averaging: coarse dims = ceil(fine / 2), spacing doubled."""
    arr = image.array
    for ax in range(arr.ndim):
        arr = _pair_average(arr, ax)
    grid = Grid(
        arr.shape,
        tuple(2.0 * h for h in image.grid.spacing),
        image.grid.origin,
    )
    return Image(grid, arr.ravel())


def restrict_stack(stack: ImageStack) -> ImageStack:
    return ImageStack(tuple(restrict(f) for f in stack.frames))


def build_pyramid(stack: ImageStack, min_dim: int) -> list[PyramidLevel]:
    """Coarsening pyramid; stops before any axis would drop below min_dim."""
    if min_dim < 4:
        raise ValueError("min_dim must be >= 4")
    levels = [PyramidLevel(0, stack)]
    while True:
        dims = levels[-1].grid.dims
        next_dims = tuple(math.ceil(m / 2) for m in dims)
        if any(m < min_dim for m in next_dims):
            break
        levels.append(PyramidLevel(len(levels), restrict_stack(levels[-1].stack)))
    return levels
