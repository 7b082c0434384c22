# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the Hölder pair scan and periodic interpolation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor, pow, sqrt
from libc.stdint cimport int64_t

cnp.import_array()


cdef int _segments(long s, Py_ssize_t n, bint periodic, Py_ssize_t* lo, Py_ssize_t* hi, Py_ssize_t* off):
    """Split ``i -> i + s`` over ``[0, n)`` into at most two runs with a constant offset."""
    if periodic:
        s = s % n
        if s < 0:
            s += n
        lo[0] = 0
        hi[0] = n - s
        off[0] = s
        if s == 0:
            return 1
        lo[1] = n - s
        hi[1] = n
        off[1] = s - n
        return 2
    lo[0] = -s if s < 0 else 0
    hi[0] = n - s if s > 0 else n
    off[0] = s
    return 1 if hi[0] > lo[0] else 0


def holder_ratio_max(values, table, double h, double gamma, bint periodic=True):
    cdef int d = values.ndim
    # pad leading axes so the innermost loop always runs over real data
    cdef const double[:, :, ::1] v = np.ascontiguousarray(values, dtype=np.float64).reshape((1,) * (3 - d) + values.shape)
    cdef const int64_t[:, ::1] tab = np.ascontiguousarray(table, dtype=np.int64).reshape(len(table), -1)
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1], n2 = v.shape[2]
    cdef Py_ssize_t k, i, j, l, p, q, r, K = tab.shape[0]
    cdef Py_ssize_t lo0[2], hi0[2], of0[2], lo1[2], hi1[2], of1[2], lo2[2], hi2[2], of2[2]
    cdef int m0, m1, m2
    cdef long sh[3]
    cdef long w
    cdef double m, diff, dist, best = 0.0
    cdef const double* src
    cdef const double* dst
    for k in range(K):
        sh[0] = sh[1] = 0
        for p in range(d):
            sh[3 - d + p] = tab[k, p]
        m0 = _segments(sh[0], n0, periodic, lo0, hi0, of0)
        m1 = _segments(sh[1], n1, periodic, lo1, hi1, of1)
        m2 = _segments(sh[2], n2, periodic, lo2, hi2, of2)
        m = 0.0
        for p in range(m0):
            for i in range(lo0[p], hi0[p]):
                for q in range(m1):
                    for j in range(lo1[q], hi1[q]):
                        src = &v[i, j, 0]
                        dst = &v[i + of0[p], j + of1[q], 0]
                        for r in range(m2):
                            for l in range(lo2[r], hi2[r]):
                                diff = fabs(dst[l + of2[r]] - src[l])
                                m = diff if diff > m else m
        if m == 0.0:
            continue
        dist = 0.0
        for p in range(3):
            w = sh[p] if sh[p] >= 0 else -sh[p]
            if periodic and n2 - w < w:
                w = n2 - w
            dist += <double>(w * w)
        dist = h * sqrt(dist)
        m = m / pow(dist, gamma)
        if m > best:
            best = m
    return best


def interp_periodic(values, double L, X):
    cdef int d = values.ndim - 1
    cdef Py_ssize_t r = values.shape[0]
    cdef Py_ssize_t n = values.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=4] v = np.ascontiguousarray(
        values, dtype=np.float64).reshape(values.shape + (1,) * (3 - d))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] x = np.ascontiguousarray(
        np.atleast_2d(X), dtype=np.float64)
    cdef Py_ssize_t m = x.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((m, r))
    cdef double h = 2.0 * L / n
    cdef double s, wt
    cdef double fr[3]
    cdef long lo[3]
    cdef long hi[3]
    cdef long idx[3]
    cdef Py_ssize_t p, j, q, corner
    for p in range(m):
        for j in range(3):
            if j < d:
                s = (x[p, j] + L) / h
                lo[j] = <long>floor(s)
                fr[j] = s - lo[j]
                lo[j] = lo[j] % n
                if lo[j] < 0:
                    lo[j] += n
                hi[j] = (lo[j] + 1) % n
            else:
                lo[j] = 0
                hi[j] = 0
                fr[j] = 0.0
        for corner in range(1 << d):
            wt = 1.0
            for j in range(3):
                if j < d and (corner >> j) & 1:
                    idx[j] = hi[j]
                    wt *= fr[j]
                else:
                    idx[j] = lo[j]
                    if j < d:
                        wt *= 1.0 - fr[j]
            for q in range(r):
                out[p, q] += wt * v[q, idx[0], idx[1], idx[2]]
    return out
