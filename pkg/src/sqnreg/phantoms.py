"""Synthetic desk-scale phantoms with known ground-truth motion.

Two kinds:
  * "uptake": fixed smooth anatomy (Gaussian blobs) with a frame-wise
    intensity ramp and known per-frame translations, mimicking a contrast
    uptake series.
  * "serial": a slowly morphing shape stack with i.i.d. jitter shifts,
    mimicking a serial sectioning; a side lobe grows along the stack so
    consecutive slices differ slightly.

Frame 1 always carries zero shift, matching the registration gauge.
All randomness is fixed by the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid_image import Grid, Image, ImageStack

__all__ = ["PhantomSpec", "PhantomTruth", "make_phantom"]

_PEAK = 105.0  # base anatomy peak; times ramp <= 2.0 plus the default
# pedestal still fits in [0, 255], so PGM output never clips


@dataclass(frozen=True)
class PhantomSpec:
    """Generator parameters; the seed fixes all randomness."""

    kind: str = "uptake"
    T: int = 5
    dims: tuple[int, int] = (64, 64)
    seed: int = 0
    max_shift: float = 3.0
    ramp: tuple[float, float] = (1.0, 2.0)
    amplitude: float = 0.0  # optional smooth-warp amplitude (uptake)
    jitter_sigma: float = 1.5  # i.i.d. shift noise (serial)
    pedestal: float = 40.0  # boundary-shelf amplitude; 0 leaves the margin empty
    ped_width: float = 0.20  # shelf rise width, fraction of the shorter extent
    margin: tuple[float, float] = (0.06, 0.14)  # window rise interval, fraction of extent

    def __post_init__(self):
        if self.kind not in ("uptake", "serial"):
            raise ValueError("phantom kind must be 'uptake' or 'serial'")
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if any(m < 32 for m in self.dims):
            raise ValueError("dims must be >= 32")
        object.__setattr__(self, "dims", tuple(int(m) for m in self.dims))


@dataclass(frozen=True)
class PhantomTruth:
    """Applied per-frame translations and intensity scales."""

    shifts: np.ndarray  # (T, 2)
    scales: np.ndarray  # (T,)


def _blob_field(coords: np.ndarray, blobs) -> np.ndarray:
    out = np.zeros(coords.shape[0])
    for amp, center, sigma in blobs:
        z = (coords - np.asarray(center)) / np.asarray(sigma)
        out += amp * np.exp(-0.5 * np.sum(z * z, axis=1))
    return out


def _window(pts: np.ndarray, extent: np.ndarray, margin=(0.06, 0.14)) -> np.ndarray:
    """Smoothstep window, exactly zero within `margin[0]` of the domain
    extent of the boundary (in object coordinates, so it travels with the
    anatomy).  Keeps moving content clear of the out-of-domain fade."""
    lo, hi = margin
    w = np.ones(pts.shape[0])
    for ax in range(pts.shape[1]):
        dist = np.minimum(pts[:, ax], extent[ax] - pts[:, ax]) / extent[ax]
        t = np.clip((dist - lo) / (hi - lo), 0.0, 1.0)
        w *= t * t * (3.0 - 2.0 * t)
    return w


def _pedestal(pts: np.ndarray, extent: np.ndarray, peak: float = 40.0, width_frac: float = 0.20) -> np.ndarray:
    """Smooth shelf rising from ~0 at the (object-frame) boundary to a
    constant interior plateau.

    It fills the windowed-out margin so the image gradient never
    vanishes there, its direction is boundary-normal — the same
    direction the out-of-domain fade produces, so edge-orientation
    measures see consistent structure near the edge — and the near-zero
    boundary values keep the fade's value drop from injecting spurious
    tangential gradients.  The interior plateau is constant and
    therefore invisible to gradient-based measures.
    """
    width = width_frac * float(np.min(extent))
    prod = np.ones(pts.shape[0])
    for ax in range(pts.shape[1]):
        t = np.clip(np.minimum(pts[:, ax], extent[ax] - pts[:, ax]) / width, 0.0, 1.0)
        prod *= t * t * (3.0 - 2.0 * t)
    # product of per-axis smoothsteps: C^1 in the corners, unlike a
    # min-distance profile whose gradient flips across the diagonals
    return peak * prod


def _texture_blobs(rng: np.random.Generator, extent: np.ndarray, count: int):
    """Medium-scale bumps riding on the anatomy.

    They translate rigidly with the main blobs and give the gradient
    direction field structure at the few-pixel scale, which is what
    actually localizes a gradient-based measure.  Amplitudes are signed
    so the texture modulates rather than brightens.
    """
    blobs = []
    for _ in range(count):
        c = rng.uniform(0.1, 0.9, size=2) * extent
        s = rng.uniform(0.05, 0.10, size=2) * extent
        blobs.append((rng.uniform(0.08, 0.18) * rng.choice([-1.0, 1.0]), c, s))
    return blobs


def _smooth_warp(coords: np.ndarray, extent: np.ndarray, amplitude: float, phase: np.ndarray) -> np.ndarray:
    if amplitude == 0.0:
        return np.zeros_like(coords)
    s = coords / extent * (2.0 * np.pi)
    w = np.empty_like(coords)
    w[:, 0] = amplitude * np.sin(s[:, 0] + phase[0]) * np.sin(s[:, 1] + phase[1])
    w[:, 1] = amplitude * np.sin(s[:, 0] + phase[2]) * np.sin(s[:, 1] + phase[3])
    return w


def make_phantom(spec: PhantomSpec) -> tuple[ImageStack, PhantomTruth]:
    """Render the phantom stack and return it with its ground truth."""
    rng = np.random.default_rng(spec.seed)
    grid = Grid.unit(spec.dims)
    coords = grid.node_coords()
    extent = np.asarray([m * h for m, h in zip(grid.dims, grid.spacing)])
    center = extent / 2.0
    T = spec.T

    if spec.kind == "uptake":
        blobs = [(1.0, center, 0.28 * extent)]
        for _ in range(3):
            c = center + rng.uniform(-0.22, 0.22, size=2) * extent
            s = rng.uniform(0.05, 0.11, size=2) * extent
            blobs.append((rng.uniform(0.5, 1.0), c, s))
        texture = _texture_blobs(rng, extent, 20)
        # an extra fine-grained texture layer (1-3 px bumps) so that
        # few-pixel misalignment produces intensity error comparable to
        # the irreducible ramp residual
        for _ in range(20):
            c = rng.uniform(0.1, 0.9, size=2) * extent
            s = rng.uniform(0.02, 0.045, size=2) * extent
            texture.append((rng.uniform(0.1, 0.25) * rng.choice([-1.0, 1.0]), c, s))

        def render(pts):
            # multiplicative texture keeps the field positive and the
            # gradient direction structured at the few-pixel scale
            mod = 1.0 + 0.55 * np.tanh(_blob_field(pts, texture))
            return _blob_field(pts, blobs) * mod * _window(pts, extent, spec.margin)

        peak = render(coords).max()
        # anatomy peak capped so ramp x peak + pedestal stays in [0, 255]
        apeak = min(_PEAK, (255.0 - spec.pedestal) / max(spec.ramp))
        scales = np.linspace(spec.ramp[0], spec.ramp[1], T)
        shifts = np.zeros((T, 2))
        # shift magnitudes bounded away from zero: a near-identity frame
        # carries no alignment information worth measuring
        mag = rng.uniform(spec.max_shift / 3.0, spec.max_shift, size=(T - 1, 2))
        shifts[1:] = rng.choice([-1.0, 1.0], size=(T - 1, 2)) * mag
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(T, 4))
        frames = []
        for t in range(T):
            pts = coords - shifts[t]
            pts = pts - _smooth_warp(coords, extent, spec.amplitude, phases[t])
            vals = render(pts) * (apeak / peak) * scales[t] + _pedestal(pts, extent, spec.pedestal, spec.ped_width)
            frames.append(Image(grid, vals))
        return ImageStack(tuple(frames)), PhantomTruth(shifts, scales)

    # serial: morphing anatomy, jitter shifts, flat intensity.  The jitter
    # sample is centered so the stack carries no net translation: a
    # registration that only undoes the jitter then has zero drift, and
    # the drift metric isolates motion the method itself introduces.
    shifts = np.zeros((T, 2))
    jitter = rng.normal(0.0, spec.jitter_sigma, size=(T - 1, 2))
    shifts[1:] = jitter - jitter.mean(axis=0)
    scales = np.ones(T)
    texture = _texture_blobs(rng, extent, 12)
    # anatomy morphs in place through a symmetric pulsation of the main
    # body; the off-center side lobe is constant.  Keeping structures at
    # fixed locations and the temporal change unbiased in direction
    # leaves the jitter as the only motion, so any net translation in a
    # result is introduced by the method itself.
    side = center + np.array([0.16, 0.12]) * extent
    frames = []
    for t in range(T):
        prog = t / max(T - 1, 1)
        main_sigma = 0.24 * extent * (1.0 + 0.10 * np.sin(2.0 * np.pi * prog))
        blobs = [
            (1.0, center, main_sigma),
            (0.55, side, 0.09 * extent),
        ]
        ref_peak = _blob_field(np.atleast_2d(center), [(1.0, center, main_sigma)])[0]
        pts = coords - shifts[t]
        mod = 1.0 + 0.45 * np.tanh(_blob_field(pts, texture))
        vals = _blob_field(pts, blobs) * mod * _window(pts, extent, spec.margin) * (_PEAK / max(ref_peak, 1e-9)) + _pedestal(pts, extent, spec.pedestal, spec.ped_width)
        frames.append(Image(grid, np.clip(vals, 0.0, 255.0)))
    return ImageStack(tuple(frames)), PhantomTruth(shifts, scales)
