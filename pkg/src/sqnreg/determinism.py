"""Deterministic-reduction mode.

When enabled, reductions whose result could depend on accumulation order
(the per-node Gram sums over frames, and the optimizer's dot products over
concatenated frame blocks) are computed with exactly rounded summation
(math.fsum).  Exactly rounded sums are independent of operand order, which
makes runs bitwise reproducible under frame permutations.  The mode is
slower and intended for tests and the --deterministic CLI flag.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

_DETERMINISTIC = False


def set_deterministic(flag: bool) -> None:
    global _DETERMINISTIC
    _DETERMINISTIC = bool(flag)


def is_deterministic() -> bool:
    return _DETERMINISTIC


@contextmanager
def deterministic(flag: bool = True):
    previous = _DETERMINISTIC
    set_deterministic(flag)
    try:
        yield
    finally:
        set_deterministic(previous)


def fsum_rows(arr: np.ndarray) -> np.ndarray:
    """Exactly rounded sum along the last axis."""
    flat = arr.reshape(-1, arr.shape[-1])
    out = np.fromiter((math.fsum(row) for row in flat), dtype=np.float64, count=flat.shape[0])
    return out.reshape(arr.shape[:-1])


def block_dot(a: np.ndarray, b: np.ndarray, n_blocks: int) -> float:
    """Dot product that is invariant under permuting equal-sized blocks.

    Per-block partial dots use numpy (identical bits for identical block
    content); the partials are combined with math.fsum, whose result does
    not depend on their order.
    """
    if n_blocks <= 1 or a.size % n_blocks != 0:
        return float(math.fsum([float(np.dot(a, b))]))
    parts = [
        float(np.dot(ab, bb))
        for ab, bb in zip(np.split(a, n_blocks), np.split(b, n_blocks))
    ]
    return math.fsum(parts)
