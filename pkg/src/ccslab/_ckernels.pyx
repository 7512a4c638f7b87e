# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled particle kernels. Same contracts as ``_pykernels``."""

import numpy as np
from libc.math cimport exp


def pairwise_sq_dists(const double[:, ::1] x, const double[:, ::1] y):
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - y[j, k]
                acc += diff * diff
            o[i, j] = acc
    return out


def svgd_phi(const double[:, ::1] edited, const double[:, ::1] source, double h):
    cdef Py_ssize_t n = edited.shape[0], d = edited.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double inv_h2 = 1.0 / (h * h)
    cdef double acc, diff, kv
    out = np.zeros((n, d))
    cdef double[:, ::1] phi = out
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(d):
                diff = edited[j, k] - edited[i, k]
                acc += diff * diff
            kv = exp(-0.5 * inv_h2 * acc)
            for k in range(d):
                phi[i, k] += kv * ((edited[j, k] - source[j, k]) - inv_h2 * (edited[j, k] - edited[i, k]))
        for k in range(d):
            phi[i, k] /= n
    return out


cdef double _kernel_sum(const double[:, ::1] x, const double[:, ::1] y, double scale, bint skip_diag) nogil:
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, acc, diff
    for i in range(n):
        for j in range(m):
            if skip_diag and i == j:
                continue
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - y[j, k]
                acc += diff * diff
            total += exp(scale * acc)
    return total


def mmd2_unbiased(const double[:, ::1] a, const double[:, ::1] b, double h):
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0]
    cdef double scale = -0.5 / (h * h)
    cdef double saa, sbb, sab
    with nogil:
        saa = _kernel_sum(a, a, scale, True) / (m * (m - 1))
        sbb = _kernel_sum(b, b, scale, True) / (n * (n - 1))
        if m == n:
            sab = _kernel_sum(a, b, scale, True) / (m * (m - 1))
        else:
            sab = _kernel_sum(a, b, scale, False) / (m * n)
    return saa + sbb - 2.0 * sab
