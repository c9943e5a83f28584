# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Same contract as ``_reference``: greedy residual-norm column pivoting with
fresh norm recomputation each step, and fused elementwise soft thresholding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def pivot_columns(a, Py_ssize_t max_pivots, double tol):
    """Greedy column pivoting by maximal residual 2-norm (see _reference)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] r = \
        np.array(a, dtype=np.float64, copy=True, order="C")
    cdef Py_ssize_t n = r.shape[0]
    cdef Py_ssize_t m = r.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pivots = np.empty(max_pivots, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] norms = np.empty(max_pivots, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] colsq = np.zeros(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] coef = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] alive = np.ones(m, dtype=np.uint8)
    cdef double[:, ::1] rv = r
    cdef double[::1] colsqv = colsq
    cdef double[::1] coefv = coef
    cdef double[::1] qv = q
    cdef cnp.uint8_t[::1] alivev = alive
    cdef Py_ssize_t i, j, c, best_j, count = 0
    cdef double v, best, qi
    cdef bint rank_deficient = False

    # initial column squared norms (row-major sweep over the contiguous rows)
    for i in range(n):
        for c in range(m):
            v = rv[i, c]
            colsqv[c] += v * v

    for _ in range(max_pivots):
        best_j = -1
        best = -1.0
        for c in range(m):
            if alivev[c] and colsqv[c] > best:
                best = colsqv[c]
                best_j = c
        if best < 0.0:
            best = 0.0
        best = sqrt(best)
        if best_j < 0 or best < tol:
            rank_deficient = True
            break
        pivots[count] = best_j
        norms[count] = best
        count += 1
        alivev[best_j] = 0
        for i in range(n):
            qv[i] = rv[i, best_j] / best
            rv[i, best_j] = 0.0
        # deflate remaining columns in two row-major passes (projection
        # coefficients, then the update with fresh squared norms)
        for c in range(m):
            coefv[c] = 0.0
            colsqv[c] = 0.0
        for i in range(n):
            qi = qv[i]
            for c in range(m):
                coefv[c] += qi * rv[i, c]
        for i in range(n):
            qi = qv[i]
            for c in range(m):
                v = rv[i, c] - coefv[c] * qi
                rv[i, c] = v
                colsqv[c] += v * v

    return pivots[:count].copy(), norms[:count].copy(), rank_deficient


def soft_threshold(x, double tau, out):
    """Elementwise shrinkage sign(x) * max(|x| - tau, 0) into ``out``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] oa = out
    cdef double[::1] xv = xa
    cdef double[::1] ov = oa
    cdef Py_ssize_t i, size = xv.shape[0]
    cdef double v, mag
    for i in range(size):
        v = xv[i]
        mag = fabs(v) - tau
        if mag > 0.0:
            ov[i] = mag if v > 0.0 else -mag
        else:
            ov[i] = 0.0
    return out
