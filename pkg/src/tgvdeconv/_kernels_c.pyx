# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: direct spatial convolution (forward + both adjoints)
and 3x3 im2col/col2im for the generator convolutions.

Mirrors the signatures in ``_kernels_np``.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def conv_same(double[:, ::1] u, double[:, ::1] k,
              Py_ssize_t[::1] pi_r, Py_ssize_t[::1] pi_c):
    cdef Py_ssize_t H = u.shape[0], W = u.shape[1], K = k.shape[0]
    cdef Py_ssize_t i, j, a, b
    cdef double acc
    out_arr = np.empty((H, W))
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] kf = np.ascontiguousarray(np.asarray(k)[::-1, ::-1])
    with nogil:
        for i in range(H):
            for j in range(W):
                acc = 0.0
                for a in range(K):
                    for b in range(K):
                        acc += kf[a, b] * u[pi_r[i + a], pi_c[j + b]]
                out[i, j] = acc
    return out_arr


def conv_same_grad_u(double[:, ::1] g, double[:, ::1] k,
                     Py_ssize_t[::1] pi_r, Py_ssize_t[::1] pi_c,
                     Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t Hg = g.shape[0], Wg = g.shape[1], K = k.shape[0]
    cdef Py_ssize_t i, j, a, b
    cdef double gij
    out_arr = np.zeros((H, W))
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] kf = np.ascontiguousarray(np.asarray(k)[::-1, ::-1])
    with nogil:
        for i in range(Hg):
            for j in range(Wg):
                gij = g[i, j]
                for a in range(K):
                    for b in range(K):
                        out[pi_r[i + a], pi_c[j + b]] += kf[a, b] * gij
    return out_arr


def conv_same_grad_k(double[:, ::1] g, double[:, ::1] u, Py_ssize_t K,
                     Py_ssize_t[::1] pi_r, Py_ssize_t[::1] pi_c):
    cdef Py_ssize_t H = g.shape[0], W = g.shape[1]
    cdef Py_ssize_t i, j, a, b
    cdef double acc
    gk_arr = np.empty((K, K))
    cdef double[:, ::1] gk = gk_arr
    with nogil:
        for a in range(K):
            for b in range(K):
                acc = 0.0
                for i in range(H):
                    for j in range(W):
                        acc += g[i, j] * u[pi_r[i + a], pi_c[j + b]]
                gk[K - 1 - a, K - 1 - b] = acc
    return gk_arr


def im2col3(double[:, :, ::1] x):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t c, a, b, i, j, ii, jj, row
    cols_arr = np.empty((C * 9, H * W))
    cdef double[:, ::1] cols = cols_arr
    with nogil:
        for c in range(C):
            for a in range(3):
                for b in range(3):
                    row = c * 9 + a * 3 + b
                    for i in range(H):
                        ii = i + a - 1
                        for j in range(W):
                            jj = j + b - 1
                            if 0 <= ii < H and 0 <= jj < W:
                                cols[row, i * W + j] = x[c, ii, jj]
                            else:
                                cols[row, i * W + j] = 0.0
    return cols_arr


def col2im3(double[:, ::1] cols, Py_ssize_t C, Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t c, a, b, i, j, ii, jj, row
    out_arr = np.zeros((C, H, W))
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for c in range(C):
            for a in range(3):
                for b in range(3):
                    row = c * 9 + a * 3 + b
                    for i in range(H):
                        ii = i + a - 1
                        if ii < 0 or ii >= H:
                            continue
                        for j in range(W):
                            jj = j + b - 1
                            if 0 <= jj < W:
                                out[c, ii, jj] += cols[row, i * W + j]
    return out_arr
