# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-node Schatten kernel for the d = 2 hot path.

Fuses the Gram accumulation, the closed-form 2x2 eigensolver, the smoothed
Schatten sum and the gradient matrix product into one pass over the nodes.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

cnp.import_array()


def schatten_d2(double[:, :, ::1] A, double q, double eps, bint want_grad):
    """Batch of 2-by-T matrices: values (N,) and optionally grads (N, 2, T)."""
    cdef Py_ssize_t N = A.shape[0]
    cdef Py_ssize_t T = A.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] values = np.empty(N, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] grads
    cdef double[:, :, ::1] gv
    cdef double[::1] vv = values

    cdef Py_ssize_t n, t
    cdef double a0, a1, g00, g01, g11, half, delta, lam1, lam2
    cdef double e2 = eps * eps
    cdef double expo = 0.5 * q - 1.0
    cdef double f1, f2, slope, m00, m01, m11, dl

    if want_grad:
        grads = np.empty((N, 2, T), dtype=np.float64)
        gv = grads
    else:
        grads = None
        gv = None

    with nogil:
        for n in range(N):
            g00 = 0.0
            g01 = 0.0
            g11 = 0.0
            for t in range(T):
                a0 = A[n, 0, t]
                a1 = A[n, 1, t]
                g00 += a0 * a0
                g01 += a0 * a1
                g11 += a1 * a1
            half = 0.5 * (g00 + g11)
            delta = sqrt(0.25 * (g00 - g11) * (g00 - g11) + g01 * g01)
            lam1 = half + delta
            lam2 = half - delta
            if lam1 < 0.0:
                lam1 = 0.0
            if lam2 < 0.0:
                lam2 = 0.0
            vv[n] = pow(lam1 + e2, 0.5 * q) + pow(lam2 + e2, 0.5 * q)
            if want_grad:
                f1 = pow(lam1 + e2, expo)
                f2 = pow(lam2 + e2, expo)
                dl = lam1 - lam2
                if dl <= 1e-6 * (lam1 + 1e-300):
                    slope = expo * pow(0.5 * (lam1 + lam2) + e2, expo - 1.0)
                else:
                    slope = (f1 - f2) / dl
                m00 = f2 + slope * (g00 - lam2)
                m01 = slope * g01
                m11 = f2 + slope * (g11 - lam2)
                for t in range(T):
                    a0 = A[n, 0, t]
                    a1 = A[n, 1, t]
                    gv[n, 0, t] = q * (m00 * a0 + m01 * a1)
                    gv[n, 1, t] = q * (m01 * a0 + m11 * a1)

    return values, (grads if want_grad else None)
