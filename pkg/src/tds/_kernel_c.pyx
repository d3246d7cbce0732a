# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core: fused composed-multinomial kernel and monomial loops.

Mirrors tds._kernel_py exactly (same Horner ordering per level) so the two
backends agree to floating-point noise.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


cdef inline double _levels(double v, const long[::1] degrees, bint include_constant) noexcept nogil:
    cdef Py_ssize_t li, j
    cdef double r
    for li in range(degrees.shape[0]):
        r = 1.0
        for j in range(degrees[li] - 1):
            r = r * v + 1.0
        v = r * v + 1.0 if include_constant else r * v
    return v


def cmk_from_dots(s, degrees, bint include_constant):
    """Composed-multinomial kernel values from precomputed inner products."""
    arr = np.asarray(s, dtype=np.float64)
    flat = np.ascontiguousarray(arr.reshape(-1))
    cdef double[::1] view = flat
    cdef long[::1] degs = np.ascontiguousarray(degrees, dtype=np.int64)
    out_arr = np.empty(flat.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(view.shape[0]):
            out[i] = _levels(view[i], degs, include_constant)
    return out_arr.reshape(arr.shape)


def cmk_matrix(X, Z, degrees, bint include_constant):
    """Kernel matrix K[i, j] = CMK(x_i, z_j) via fused dot + level loops."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef long[::1] degs = np.ascontiguousarray(degrees, dtype=np.int64)
    if Xv.shape[1] != Zv.shape[1]:
        raise ValueError("dimension mismatch")
    out_arr = np.empty((Xv.shape[0], Zv.shape[0]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, d = Xv.shape[1]
    cdef double s
    with nogil:
        for i in range(Xv.shape[0]):
            for j in range(Zv.shape[0]):
                s = 0.0
                for k in range(d):
                    s += Xv[i, k] * Zv[j, k]
                out[i, j] = _levels(s, degs, include_constant)
    return out_arr


def cmk_gram(X, degrees, bint include_constant):
    """Exactly symmetric Gram matrix: upper triangle computed, then mirrored."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef long[::1] degs = np.ascontiguousarray(degrees, dtype=np.int64)
    out_arr = np.empty((Xv.shape[0], Xv.shape[0]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, d = Xv.shape[1]
    cdef double s
    with nogil:
        for i in range(Xv.shape[0]):
            for j in range(i, Xv.shape[0]):
                s = 0.0
                for k in range(d):
                    s += Xv[i, k] * Xv[j, k]
                s = _levels(s, degs, include_constant)
                out[i, j] = s
                out[j, i] = s
    return out_arr


def monomial_matrix(X, parents, varidx):
    """Design matrix of monomials x^alpha (incremental parent products)."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const long[::1] par = np.ascontiguousarray(parents, dtype=np.int64)
    cdef const long[::1] var = np.ascontiguousarray(varidx, dtype=np.int64)
    out_arr = np.empty((Xv.shape[0], par.shape[0]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(Xv.shape[0]):
            out[i, 0] = 1.0
            for j in range(1, par.shape[0]):
                out[i, j] = out[i, par[j]] * Xv[i, var[j]]
    return out_arr
