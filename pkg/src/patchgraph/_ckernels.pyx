# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


def xoshiro_fill(uint64_t[::1] state, Py_ssize_t n):
    cdef uint64_t s0 = state[0], s1 = state[1], s2 = state[2], s3 = state[3]
    cdef uint64_t t
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = _rotl(s1 * 5, 7) * 9
            t = s1 << 17
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return out


def segment_sum(values, index, Py_ssize_t n):
    vals = np.ascontiguousarray(values, dtype=np.float64)
    idx_arr = np.ascontiguousarray(index, dtype=np.int64)
    trailing = vals.shape[1:]
    cdef Py_ssize_t e_count = vals.shape[0]
    cdef Py_ssize_t width = 1
    for s in trailing:
        width *= s
    out = np.zeros((n,) + tuple(trailing), dtype=np.float64)
    cdef double[:, ::1] v = vals.reshape(e_count, width)
    cdef double[:, ::1] o = out.reshape(n, width)
    cdef int64_t[::1] idx = idx_arr
    cdef Py_ssize_t e, k
    cdef int64_t row
    for e in range(e_count):
        if idx[e] < 0 or idx[e] >= n:
            raise IndexError(f"segment index {idx[e]} out of range for {n} segments")
    with nogil:
        for e in range(e_count):
            row = idx[e]
            for k in range(width):
                o[row, k] += v[e, k]
    return out


def segment_softmax(values, index, Py_ssize_t n):
    vals = np.ascontiguousarray(values, dtype=np.float64)
    idx_arr = np.ascontiguousarray(index, dtype=np.int64)
    cdef double[::1] v = vals
    cdef int64_t[::1] idx = idx_arr
    cdef Py_ssize_t e_count = v.shape[0]
    peak_arr = np.full(n, -np.inf)
    denom_arr = np.zeros(n)
    out = np.empty(e_count, dtype=np.float64)
    cdef double[::1] peak = peak_arr
    cdef double[::1] denom = denom_arr
    cdef double[::1] o = out
    cdef Py_ssize_t e
    cdef int bad = 0
    with nogil:
        for e in range(e_count):
            if idx[e] < 0 or idx[e] >= n:
                bad = 1
                break
            if v[e] > peak[idx[e]]:
                peak[idx[e]] = v[e]
    if bad:
        raise IndexError(f"segment index {idx[e]} out of range for {n} segments")
    with nogil:
        for e in range(e_count):
            o[e] = v[e] - peak[idx[e]]
    np.exp(out, out=out)  # numpy's vectorised exp beats a scalar libm loop
    with nogil:
        for e in range(e_count):
            denom[idx[e]] += o[e]
        for e in range(e_count):
            o[e] = o[e] / denom[idx[e]]
    return out


def segment_softmax_grad(alpha, grad, index, Py_ssize_t n):
    a_arr = np.ascontiguousarray(alpha, dtype=np.float64)
    g_arr = np.ascontiguousarray(grad, dtype=np.float64)
    idx_arr = np.ascontiguousarray(index, dtype=np.int64)
    cdef double[::1] a = a_arr
    cdef double[::1] g = g_arr
    cdef int64_t[::1] idx = idx_arr
    cdef Py_ssize_t e_count = a.shape[0]
    dot_arr = np.zeros(n)
    out = np.empty(e_count, dtype=np.float64)
    cdef double[::1] dot = dot_arr
    cdef double[::1] o = out
    cdef Py_ssize_t e
    with nogil:
        for e in range(e_count):
            dot[idx[e]] += a[e] * g[e]
        for e in range(e_count):
            o[e] = a[e] * (g[e] - dot[idx[e]])
    return out


def confusion_matrix(y_true, y_pred, Py_ssize_t k):
    t_arr = np.ascontiguousarray(y_true, dtype=np.int64)
    p_arr = np.ascontiguousarray(y_pred, dtype=np.int64)
    cdef int64_t[::1] t = t_arr
    cdef int64_t[::1] p = p_arr
    out = np.zeros((k, k), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef Py_ssize_t i
    for i in range(t.shape[0]):
        if t[i] < 0 or t[i] >= k or p[i] < 0 or p[i] >= k:
            raise ValueError("label out of range")
        o[t[i], p[i]] += 1
    return out


def auroc_binary(scores, positive):
    s_arr = np.ascontiguousarray(scores, dtype=np.float64)
    pos_arr = np.ascontiguousarray(positive, dtype=np.uint8)
    order_arr = np.argsort(s_arr, kind="mergesort").astype(np.int64)
    cdef double[::1] s = s_arr
    cdef unsigned char[::1] pos = pos_arr
    cdef int64_t[::1] order = order_arr
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t i = 0, j, k
    cdef double rank, rank_sum = 0.0
    cdef double n_pos = 0.0
    for k in range(n):
        n_pos += pos[k]
    cdef double n_neg = n - n_pos
    while i < n:
        j = i + 1
        while j < n and s[order[j]] == s[order[i]]:
            j += 1
        rank = 0.5 * (i + j + 1)
        for k in range(i, j):
            if pos[order[k]]:
                rank_sum += rank
        i = j
    return (rank_sum - 0.5 * n_pos * (n_pos + 1)) / (n_pos * n_neg)
