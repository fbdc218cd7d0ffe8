# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the convolution/pooling kernels.

Same contracts as :mod:`clstack.kernels.reference`; selected automatically at
import time when the extension has been built.
"""

import numpy as np

BACKEND = "cython"


def conv1d_forward(double[:, ::1] x, double[:, :, ::1] kernels, double[::1] bias, Py_ssize_t stride):
    cdef Py_ssize_t c_in = x.shape[0]
    cdef Py_ssize_t length = x.shape[1]
    cdef Py_ssize_t c_out = kernels.shape[0]
    cdef Py_ssize_t klen = kernels.shape[2]
    cdef Py_ssize_t n = (length - klen) // stride + 1
    out_arr = np.empty((c_out, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t o, c, i, j
    cdef double w, b
    # innermost loop runs over output positions for cache-friendly accumulation
    for o in range(c_out):
        b = bias[o]
        for i in range(n):
            out[o, i] = b
        for c in range(c_in):
            for j in range(klen):
                w = kernels[o, c, j]
                for i in range(n):
                    out[o, i] += w * x[c, i * stride + j]
    return out_arr


def conv1d_backward(double[:, ::1] x, double[:, :, ::1] kernels, Py_ssize_t stride,
                    double[:, ::1] grad_out):
    cdef Py_ssize_t c_in = x.shape[0]
    cdef Py_ssize_t length = x.shape[1]
    cdef Py_ssize_t c_out = kernels.shape[0]
    cdef Py_ssize_t klen = kernels.shape[2]
    cdef Py_ssize_t n = grad_out.shape[1]
    gx_arr = np.zeros((c_in, length), dtype=np.float64)
    gk_arr = np.zeros((c_out, c_in, klen), dtype=np.float64)
    gb_arr = np.zeros(c_out, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, :, ::1] gk = gk_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t o, c, i, j, base
    cdef double g
    for o in range(c_out):
        for i in range(n):
            g = grad_out[o, i]
            gb[o] += g
            base = i * stride
            for c in range(c_in):
                for j in range(klen):
                    gk[o, c, j] += g * x[c, base + j]
                    gx[c, base + j] += g * kernels[o, c, j]
    return gx_arr, gk_arr, gb_arr


def maxpool_forward(double[:, ::1] x, Py_ssize_t target):
    cdef Py_ssize_t c = x.shape[0]
    cdef Py_ssize_t length = x.shape[1]
    out_arr = np.empty((c, target), dtype=np.float64)
    arg_arr = np.empty((c, target), dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef long long[:, ::1] arg = arg_arr
    cdef Py_ssize_t row, i, j, start, end, best_j
    cdef double best, v
    for row in range(c):
        for i in range(target):
            start = (i * length) // target
            end = ((i + 1) * length + target - 1) // target
            best = x[row, start]
            best_j = start
            for j in range(start + 1, end):
                v = x[row, j]
                if v > best:
                    best = v
                    best_j = j
            out[row, i] = best
            arg[row, i] = best_j
    return out_arr, arg_arr


def maxpool_backward(long long[:, ::1] argmax, double[:, ::1] grad_out, Py_ssize_t length):
    cdef Py_ssize_t c = grad_out.shape[0]
    cdef Py_ssize_t target = grad_out.shape[1]
    gx_arr = np.zeros((c, length), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef Py_ssize_t row, i
    for row in range(c):
        for i in range(target):
            gx[row, argmax[row, i]] += grad_out[row, i]
    return gx_arr
