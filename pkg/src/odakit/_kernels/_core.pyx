# Row-wise hot kernels, compiled. Contracts mirror _pure.py exactly:
# float64 C-contiguous 2-D inputs, float64 outputs, natural logs,
# 0*ln(0) == 0. Reductions run in index order (deterministic).

from libc.math cimport exp, log

import numpy as np


def softmax_rows(const double[:, ::1] scores, double tau):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t k = scores.shape[1]
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double m, s, z
    for i in range(n):
        m = scores[i, 0] / tau
        for j in range(1, k):
            z = scores[i, j] / tau
            if z > m:
                m = z
        s = 0.0
        for j in range(k):
            z = exp(scores[i, j] / tau - m)
            out[i, j] = z
            s += z
        for j in range(k):
            out[i, j] /= s
    return out_arr


def log_softmax_rows(const double[:, ::1] scores, double tau):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t k = scores.shape[1]
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double m, s, z, lse
    for i in range(n):
        m = scores[i, 0] / tau
        for j in range(1, k):
            z = scores[i, j] / tau
            if z > m:
                m = z
        s = 0.0
        for j in range(k):
            z = scores[i, j] / tau - m
            out[i, j] = z
            s += exp(z)
        lse = log(s)
        for j in range(k):
            out[i, j] -= lse
    return out_arr


def entropy_rows(const double[:, ::1] probs):
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t k = probs.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc, p
    for i in range(n):
        acc = 0.0
        for j in range(k):
            p = probs[i, j]
            if p > 0.0:
                acc -= p * log(p)
        out[i] = acc
    return out_arr


def entropy_grad_rows(const double[:, ::1] probs):
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t k = probs.shape[1]
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double h, p, lp
    for i in range(n):
        h = 0.0
        for j in range(k):
            p = probs[i, j]
            if p > 0.0:
                lp = log(p)
                out[i, j] = lp
                h -= p * lp
            else:
                out[i, j] = 0.0
        for j in range(k):
            p = probs[i, j]
            if p > 0.0:
                out[i, j] = -p * (out[i, j] + h)
            else:
                out[i, j] = 0.0
    return out_arr


def soft_ce_rows(const double[:, ::1] targets, const double[:, ::1] log_probs):
    cdef Py_ssize_t n = targets.shape[0]
    cdef Py_ssize_t k = targets.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc, q
    for i in range(n):
        acc = 0.0
        for j in range(k):
            q = targets[i, j]
            if q > 0.0:
                acc -= q * log_probs[i, j]
        out[i] = acc
    return out_arr
