# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the autodiff engine.

All volumetric kernels work on rank-4 ``(C, X, Y, Z)`` arrays; 2D callers
append a unit depth axis. Loop orders match the numpy fallbacks in
:mod:`ndcscene.kernels` so both backends accumulate in the same sequence.
"""
import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy

ctypedef fused real:
    float
    double


def im2col_3d(real[:, :, :, ::1] xp, int kx, int ky, int kz, int stride,
              int ox, int oy, int oz):
    cdef Py_ssize_t C = xp.shape[0]
    dtype = np.float32 if real is float else np.float64
    out = np.empty((C, kx, ky, kz, ox, oy, oz), dtype=dtype)
    cdef real[:, :, :, :, :, :, ::1] cols = out
    cdef Py_ssize_t c, a, b, e, i, j, k
    with nogil:
        for c in range(C):
            for a in range(kx):
                for b in range(ky):
                    for e in range(kz):
                        for i in range(ox):
                            for j in range(oy):
                                if stride == 1:  # rows are contiguous on both sides
                                    memcpy(&cols[c, a, b, e, i, j, 0], &xp[c, i + a, j + b, e], oz * sizeof(real))
                                else:
                                    for k in range(oz):
                                        cols[c, a, b, e, i, j, k] = xp[c, i * stride + a, j * stride + b, k * stride + e]
    return out


def col2im_3d(real[:, :, :, :, :, :, ::1] cols, int px, int py, int pz, int stride):
    cdef Py_ssize_t C = cols.shape[0]
    cdef Py_ssize_t kx = cols.shape[1], ky = cols.shape[2], kz = cols.shape[3]
    cdef Py_ssize_t ox = cols.shape[4], oy = cols.shape[5], oz = cols.shape[6]
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((C, px, py, pz), dtype=dtype)
    cdef real[:, :, :, ::1] xp = out
    cdef Py_ssize_t c, a, b, e, i, j, k
    with nogil:
        for c in range(C):
            for a in range(kx):
                for b in range(ky):
                    for e in range(kz):
                        for i in range(ox):
                            for j in range(oy):
                                for k in range(oz):
                                    xp[c, i * stride + a, j * stride + b, k * stride + e] += cols[c, a, b, e, i, j, k]
    return out


def gather_weighted(real[:, ::1] src, cnp.int64_t[:, ::1] idx, double[:, ::1] w):
    cdef Py_ssize_t C = src.shape[0], N = idx.shape[0], T = idx.shape[1]
    dtype = np.float32 if real is float else np.float64
    out = np.empty((C, N), dtype=dtype)
    cdef real[:, ::1] o = out
    cdef Py_ssize_t c, n, t
    cdef double acc
    with nogil:
        for c in range(C):
            for n in range(N):
                acc = 0.0
                for t in range(T):
                    acc = acc + w[n, t] * <double>src[c, idx[n, t]]
                o[c, n] = <real>acc
    return out


def scatter_weighted(real[:, ::1] g, cnp.int64_t[:, ::1] idx, double[:, ::1] w, Py_ssize_t nsrc):
    cdef Py_ssize_t C = g.shape[0], N = idx.shape[0], T = idx.shape[1]
    acc_arr = np.zeros((C, nsrc), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef Py_ssize_t c, n, t
    with nogil:
        for c in range(C):
            for n in range(N):
                for t in range(T):
                    acc[c, idx[n, t]] += w[n, t] * <double>g[c, n]
    dtype = np.float32 if real is float else np.float64
    return acc_arr.astype(dtype)
