"""Vectorized numpy implementation of the per-node Schatten kernels.

Works on batches of small d-by-T matrices (d in {2, 3}).  Singular values
come from closed-form symmetric 2x2/3x3 eigensolvers applied to the
smaller Gram matrix; the gradient is the matrix function
q * f(A A^T) A with f(lam) = (lam + eps^2)^(q/2 - 1).
"""

from __future__ import annotations

import numpy as np

from ..determinism import fsum_rows, is_deterministic

_RANK_RTOL = 1e-12


def _gram_small(A: np.ndarray) -> tuple[np.ndarray, bool]:
    """Gram matrix on the smaller side; returns (G, used_row_side)."""
    N, d, T = A.shape
    if d <= T:
        if is_deterministic():
            prod = A[:, :, None, :] * A[:, None, :, :]
            return fsum_rows(prod), True
        return np.einsum("nit,njt->nij", A, A), True
    if is_deterministic():
        prod = A[:, :, :, None] * A[:, :, None, :]
        # sum over the row index (length d); order canonical, fsum for exactness
        return fsum_rows(np.moveaxis(prod, 1, -1)), False
    return np.einsum("nit,nis->nts", A, A), False


def _eigvals_sym2(G: np.ndarray) -> np.ndarray:
    """Descending eigenvalues of symmetric 2x2 matrices, shape (N, 2)."""
    a, b, c = G[:, 0, 0], G[:, 0, 1], G[:, 1, 1]
    half = 0.5 * (a + c)
    delta = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
    return np.stack([half + delta, half - delta], axis=-1)


def _eigvals_sym3(G: np.ndarray) -> np.ndarray:
    """Descending eigenvalues of symmetric 3x3 matrices (trigonometric form)."""
    a00, a11, a22 = G[:, 0, 0], G[:, 1, 1], G[:, 2, 2]
    a01, a02, a12 = G[:, 0, 1], G[:, 0, 2], G[:, 1, 2]
    q = (a00 + a11 + a22) / 3.0
    p2 = (a00 - q) ** 2 + (a11 - q) ** 2 + (a22 - q) ** 2 + 2.0 * (
        a01 * a01 + a02 * a02 + a12 * a12
    )
    p = np.sqrt(np.maximum(p2 / 6.0, 0.0))
    safe_p = np.where(p > 0.0, p, 1.0)
    b00, b11, b22 = (a00 - q) / safe_p, (a11 - q) / safe_p, (a22 - q) / safe_p
    b01, b02, b12 = a01 / safe_p, a02 / safe_p, a12 / safe_p
    detb = (
        b00 * (b11 * b22 - b12 * b12)
        - b01 * (b01 * b22 - b12 * b02)
        + b02 * (b01 * b12 - b11 * b02)
    )
    r = np.clip(0.5 * detb, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam1 = q + 2.0 * p * np.cos(phi)
    lam3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam2 = 3.0 * q - lam1 - lam3
    return np.stack([lam1, lam2, lam3], axis=-1)


def _gram_eigvals(G: np.ndarray) -> np.ndarray:
    s = G.shape[-1]
    if s == 2:
        return _eigvals_sym2(G)
    if s == 3:
        return _eigvals_sym3(G)
    raise ValueError(f"closed-form eigensolver supports sizes 2 and 3, got {s}")


def spectrum_batch(A: np.ndarray) -> np.ndarray:
    """Descending singular values of each d-by-T matrix, shape (N, min(d, T))."""
    G, _ = _gram_small(A)
    lam = np.maximum(_gram_eigvals(G), 0.0)
    return np.sqrt(lam)


def _matrix_function_sym(G: np.ndarray, lam: np.ndarray, f, fprime) -> np.ndarray:
    """f(G) for batches of symmetric 2x2 or 3x3 with known eigenvalues."""
    s = G.shape[-1]
    if s == 2:
        lam1, lam2 = lam[:, 0], lam[:, 1]
        f1, f2 = f(lam1), f(lam2)
        delta = lam1 - lam2
        scale = np.maximum(np.abs(lam1), np.abs(lam2))
        degenerate = delta <= 1e-6 * (scale + 1e-300)
        slope = np.where(
            degenerate,
            fprime(0.5 * (lam1 + lam2)),
            (f1 - f2) / np.where(degenerate, 1.0, delta),
        )
        eye = np.eye(2)
        return f2[:, None, None] * eye + slope[:, None, None] * (G - lam2[:, None, None] * eye)
    # size 3: eigenvectors via LAPACK; the closed form covers eigenvalues only
    w, V = np.linalg.eigh(G)
    return np.einsum("nik,nk,njk->nij", V, f(w), V)


def schatten_batch(A: np.ndarray, q: float, eps: float, want_grad: bool = True):
    """Smoothed Schatten value sum_i (lam_i + eps^2)^(q/2) and its gradient.

    A has shape (N, d, T).  Returns (values (N,), grads (N, d, T) or None).
    For q == 0 with eps == 0 the value is the numerical rank (no gradient).
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    N, d, T = A.shape
    G, row_side = _gram_small(A)
    lam = np.maximum(_gram_eigvals(G), 0.0)

    if q == 0.0 and eps == 0.0:
        if want_grad:
            raise ValueError("the rank count (q=0, eps=0) has no gradient")
        sigma = np.sqrt(lam)
        tol = _RANK_RTOL * np.maximum(sigma[:, :1], 1.0)
        return np.sum(sigma > tol, axis=-1).astype(np.float64), None

    e2 = eps * eps
    values = np.sum(np.power(lam + e2, 0.5 * q), axis=-1)
    if not want_grad:
        return values, None
    if q < 2.0 and eps <= 0.0:
        raise ValueError("gradient requires eps > 0 when q < 2")

    expo = 0.5 * q - 1.0

    def f(x):
        return np.power(np.maximum(x, 0.0) + e2, expo)

    def fprime(x):
        return expo * np.power(np.maximum(x, 0.0) + e2, expo - 1.0)

    W = _matrix_function_sym(G, lam, f, fprime)
    if row_side:
        grads = q * np.einsum("nij,njt->nit", W, A)
    else:
        grads = q * np.einsum("nit,nts->nis", A, W)
    return values, grads
