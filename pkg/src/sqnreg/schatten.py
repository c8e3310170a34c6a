"""Schatten-q-(quasi)norm values and analytic derivatives for small
d-by-T matrices.

The quasinorm sum_i sigma_i^q has unbounded derivative at sigma = 0 for
q < 1, so value and gradient are smoothed as sum_i (lam_i + eps^2)^(q/2)
with lam_i the Gram eigenvalues; eps = 0 recovers the plain quasinorm.
Spectra come from closed-form symmetric 2x2/3x3 eigensolvers on the
smaller Gram side, so the per-node cost is O(d^2 T) and independent of the
image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = [
    "SchattenConfig",
    "SingularSpectrum",
    "spectrum",
    "schatten_value",
    "schatten_grad",
]


@dataclass(frozen=True)
class SchattenConfig:
    """Exponent q >= 0 and smoothing eps >= 0.

    Values are defined for any such pair; the gradient additionally needs
    eps > 0 whenever q < 2 (enforced by schatten_grad).  The optimizer
    only ever uses q in (0, 2); larger q is allowed here for diagnostics.
    """

    q: float = 0.5
    eps: float = 1e-6

    def __post_init__(self):
        if self.q < 0.0:
            raise ValueError("q must be nonnegative")
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")


@dataclass(frozen=True)
class SingularSpectrum:
    """Ordered singular values sigma_1 >= ... >= sigma_min(d,T) >= 0."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if np.any(np.diff(sigma) > 0) or np.any(sigma < 0):
            raise ValueError("singular values must be nonincreasing and nonnegative")
        object.__setattr__(self, "sigma", sigma)


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("expected a single d-by-T matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    if min(A.shape) > 3:
        raise ValueError("closed-form solver needs min(d, T) <= 3")
    return A


def spectrum(A) -> SingularSpectrum:
    """Singular values of a single small matrix via the smaller Gram side."""
    A = _as_matrix(A)
    return SingularSpectrum(kernels.spectrum_batch(A[None])[0])


def schatten_value(A, cfg: SchattenConfig) -> float:
    """sum_i (sigma_i^2 + eps^2)^(q/2); rank count for q = 0, eps = 0."""
    A = _as_matrix(A)
    values, _ = kernels.schatten_batch(A[None], cfg.q, cfg.eps, want_grad=False)
    return float(values[0])


def schatten_grad(A, cfg: SchattenConfig) -> np.ndarray:
    """Derivative of schatten_value with respect to the matrix entries."""
    A = _as_matrix(A)
    if cfg.q < 2.0 and cfg.eps <= 0.0:
        raise ValueError("gradient requires eps > 0 when q < 2")
    _, grads = kernels.schatten_batch(A[None], cfg.q, cfg.eps, want_grad=True)
    return grads[0]
