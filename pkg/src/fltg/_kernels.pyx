# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled vector kernels.

Every reduction runs strictly left to right so results are bit-reproducible
for a given input order. Inputs must be C-contiguous float64 arrays; the
``fltg.vecmath`` wrappers take care of that.
"""
import numpy as np

BACKEND = "cython"


def dot(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t k, d = a.shape[0]
    cdef double acc = 0.0
    with nogil:
        for k in range(d):
            acc += a[k] * b[k]
    return acc


def sq_norm(const double[::1] a):
    cdef Py_ssize_t k, d = a.shape[0]
    cdef double acc = 0.0
    with nogil:
        for k in range(d):
            acc += a[k] * a[k]
    return acc


def row_dots(const double[:, ::1] m, const double[::1] v):
    cdef Py_ssize_t i, k, n = m.shape[0], d = m.shape[1]
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            acc = 0.0
            for k in range(d):
                acc += m[i, k] * v[k]
            o[i] = acc
    return out


def row_sq_norms(const double[:, ::1] m):
    cdef Py_ssize_t i, k, n = m.shape[0], d = m.shape[1]
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            acc = 0.0
            for k in range(d):
                acc += m[i, k] * m[i, k]
            o[i] = acc
    return out


def weighted_row_sum(const double[:, ::1] m, const double[::1] w):
    cdef Py_ssize_t i, k, n = m.shape[0], d = m.shape[1]
    cdef double wi
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            wi = w[i]
            for k in range(d):
                o[k] += wi * m[i, k]
    return out


def pairwise_sq_dists(const double[:, ::1] m):
    cdef Py_ssize_t i, j, k, n = m.shape[0], d = m.shape[1]
    cdef double acc, diff
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(d):
                    diff = m[i, k] - m[j, k]
                    acc += diff * diff
                o[i, j] = acc
                o[j, i] = acc
    return out
