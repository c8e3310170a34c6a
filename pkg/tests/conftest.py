import numpy as np
import pytest


def central_diff(f, x, i, step):
    """Central finite difference of scalar f at coordinate i."""
    e = np.zeros_like(x)
    e[i] = step
    return (f(x + e) - f(x - e)) / (2.0 * step)


def check_gradient(f, x, grad, coords, step=1e-6, rtol=1e-4):
    """Compare analytic grad against central differences at given coords.

    The relative error is measured against the larger of the two values
    with a small absolute floor, so near-zero components do not blow up
    the ratio.
    """
    for i in coords:
        fd = central_diff(f, x, i, step)
        denom = max(abs(fd), abs(grad[i]), 1e-8)
        assert abs(fd - grad[i]) / denom < rtol, (
            f"coordinate {i}: analytic {grad[i]:.6e} vs fd {fd:.6e}"
        )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
