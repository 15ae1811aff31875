# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: landscape heights, nearest-point distances, cosine.

Signature-compatible with _kernels_py; operands arrive as C-contiguous
float64 arrays prepared by scoutlab.kernels.
"""

from libc.math cimport exp, sqrt, INFINITY

import numpy as np


def mixture_height(double[::1] x, double[:, ::1] centers,
                   double[::1] heights, double[::1] sigmas):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = heights.shape[0]
    cdef Py_ssize_t d = x.shape[0]
    cdef double total = 0.0
    cdef double sq, dx, s
    for i in range(n):
        sq = 0.0
        for j in range(d):
            dx = x[j] - centers[i, j]
            sq += dx * dx
        s = sigmas[i]
        total += heights[i] * exp(-sq / (2.0 * s * s))
    return total


def mixture_height_batch(double[:, ::1] xs, double[:, ::1] centers,
                         double[::1] heights, double[::1] sigmas):
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t m = xs.shape[0]
    cdef Py_ssize_t n = heights.shape[0]
    cdef Py_ssize_t d = xs.shape[1]
    cdef double sq, dx, s, total
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    for k in range(m):
        total = 0.0
        for i in range(n):
            sq = 0.0
            for j in range(d):
                dx = xs[k, j] - centers[i, j]
                sq += dx * dx
            s = sigmas[i]
            total += heights[i] * exp(-sq / (2.0 * s * s))
        ov[k] = total
    return out


def min_distance(double[::1] x, double[:, ::1] points):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = x.shape[0]
    cdef double best = INFINITY
    cdef double sq, dx
    for i in range(n):
        sq = 0.0
        for j in range(d):
            dx = x[j] - points[i, j]
            sq += dx * dx
        if sq < best:
            best = sq
    if best == INFINITY:
        return INFINITY
    return sqrt(best)


def cosine_scores(double[::1] query, double[:, ::1] vectors):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = vectors.shape[0]
    cdef Py_ssize_t d = query.shape[0]
    cdef double qn = 0.0
    cdef double dot, vn, denom
    for j in range(d):
        qn += query[j] * query[j]
    qn = sqrt(qn)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    for i in range(n):
        dot = 0.0
        vn = 0.0
        for j in range(d):
            dot += query[j] * vectors[i, j]
            vn += vectors[i, j] * vectors[i, j]
        denom = qn * sqrt(vn)
        ov[i] = dot / denom if denom > 0.0 else 0.0
    return out
