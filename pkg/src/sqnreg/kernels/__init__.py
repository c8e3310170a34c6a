"""Per-node Schatten kernels with backend selection at import time.

If the compiled extension built, the d = 2 hot path runs through it;
otherwise (and for d = 3, rank counting, or deterministic-reduction mode)
the vectorized numpy implementation is used.  `backend()` reports what was
selected; `schatten_batch` accepts `force_backend` for the benchmark.
"""

from __future__ import annotations

import numpy as np

from ..determinism import is_deterministic
from . import _schatten_np

try:
    from . import _schatten_cy

    HAVE_COMPILED = True
except ImportError:  # pure-Python install
    _schatten_cy = None
    HAVE_COMPILED = False

__all__ = ["schatten_batch", "spectrum_batch", "backend", "HAVE_COMPILED"]


def backend() -> str:
    return "compiled" if HAVE_COMPILED else "numpy"


def spectrum_batch(A: np.ndarray) -> np.ndarray:
    """Descending singular values per node, shape (N, min(d, T))."""
    return _schatten_np.spectrum_batch(np.ascontiguousarray(A, dtype=np.float64))


def schatten_batch(
    A: np.ndarray,
    q: float,
    eps: float,
    want_grad: bool = True,
    force_backend: str | None = None,
):
    """Smoothed Schatten values and gradients for a batch of d-by-T matrices."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 3:
        raise ValueError("expected a batch of matrices, shape (N, d, T)")
    d = A.shape[1]

    use_compiled = HAVE_COMPILED and d == 2 and not is_deterministic()
    use_compiled = use_compiled and not (q == 0.0 and eps == 0.0)
    if force_backend == "numpy":
        use_compiled = False
    elif force_backend == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel is not available")
        if d != 2:
            raise ValueError("compiled kernel only covers d = 2")
        use_compiled = True

    if use_compiled:
        if want_grad and q < 2.0 and eps <= 0.0:
            raise ValueError("gradient requires eps > 0 when q < 2")
        return _schatten_cy.schatten_d2(A, float(q), float(eps), bool(want_grad))
    return _schatten_np.schatten_batch(A, float(q), float(eps), want_grad)
