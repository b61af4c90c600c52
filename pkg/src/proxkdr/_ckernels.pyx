# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: pairwise distances, Gaussian Gram matrices, kernel
expansions and Epanechnikov weights.

Mirrors :mod:`proxkdr._pykernels` function-for-function.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()


def sq_dists(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    out = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(na):
            for j in range(nb):
                acc = 0.0
                for k in range(d):
                    diff = a[i, k] - b[j, k]
                    acc = acc + diff * diff
                o[i, j] = acc
    return out


def gaussian_gram(const double[:, ::1] a, const double[:, ::1] b, double gamma):
    # exact distances from the loop above, then numpy's vectorised exp
    out = sq_dists(a, b)
    np.multiply(out, -gamma, out=out)
    return np.exp(out, out=out)


def gaussian_expand(const double[:, ::1] queries, const double[:, ::1] centers,
                    const double[::1] weights, double gamma):
    cdef Py_ssize_t nq = queries.shape[0], nc = centers.shape[0], d = queries.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, total
    out = np.empty(nq, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(nq):
            total = 0.0
            for j in range(nc):
                acc = 0.0
                for k in range(d):
                    diff = queries[i, k] - centers[j, k]
                    acc = acc + diff * diff
                total = total + weights[j] * exp(-gamma * acc)
            o[i] = total
    return out


def epanechnikov(const double[::1] u, double h_bw):
    cdef Py_ssize_t n = u.shape[0], i
    cdef double t
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            t = u[i] / h_bw
            if fabs(t) <= 1.0:
                o[i] = 0.75 * (1.0 - t * t) / h_bw
            else:
                o[i] = 0.0
    return out
