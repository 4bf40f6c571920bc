# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the per-step hot path.

Both functions mirror :mod:`banditlab._kernels_py` exactly; the pure-Python
module is the reference the tests compare against.
"""
from libc.math cimport sqrt
from libc.stdlib cimport free, malloc


def optimistic_scores(const double[::1] x, const double[:, ::1] centers,
                      const double[:, :, ::1] gram_inv,
                      const double[::1] sqrt_beta, double[::1] out):
    """Fill ``out[k] = <x, c_k> + sqrt_beta[k] * ||x||_{G_k}`` for every arm."""
    cdef Py_ssize_t n_arms = centers.shape[0]
    cdef Py_ssize_t d = centers.shape[1]
    cdef Py_ssize_t k, i, j
    cdef double mean, quad, row
    for k in range(n_arms):
        mean = 0.0
        for i in range(d):
            mean += x[i] * centers[k, i]
        if sqrt_beta[k] != 0.0:
            quad = 0.0
            for i in range(d):
                row = 0.0
                for j in range(d):
                    row += gram_inv[k, i, j] * x[j]
                quad += x[i] * row
            if quad > 0.0:
                mean += sqrt_beta[k] * sqrt(quad)
        out[k] = mean
    return out


def sherman_morrison(double[:, ::1] gram_inv, const double[::1] x):
    """In-place ``G <- G - (G x)(G x)^T / (1 + x^T G x)``; returns the denominator.

    ``gram_inv`` must be symmetric. Leaves it untouched when the denominator is
    below 1e-12 so the caller can refactor instead.
    """
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double denom = 1.0
    cdef double *u = <double *> malloc(d * sizeof(double))
    if u == NULL:
        raise MemoryError()
    try:
        for i in range(d):
            u[i] = 0.0
            for j in range(d):
                u[i] += gram_inv[i, j] * x[j]
            denom += x[i] * u[i]
        if denom < 1e-12:
            return denom
        for i in range(d):
            for j in range(i, d):
                gram_inv[i, j] -= u[i] * u[j] / denom
                if j != i:
                    gram_inv[j, i] = gram_inv[i, j]
        return denom
    finally:
        free(u)
