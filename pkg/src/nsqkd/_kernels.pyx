# cython: language_level=3
"""Compiled hot kernels: GF(2) Toeplitz hashing, sparse syndromes and
sum-product syndrome decoding.

Mirrors ``_kernels_py`` exactly in signature and semantics.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p
from libc.stdint cimport int64_t, uint8_t, uint64_t

cnp.import_array()


def toeplitz_hash(seed, x, Py_ssize_t out_len):
    cdef const uint8_t[::1] s = np.ascontiguousarray(seed, dtype=np.uint8)
    cdef const uint8_t[::1] xv = np.ascontiguousarray(x, dtype=np.uint8)
    cdef Py_ssize_t n = xv.shape[0]
    if out_len == 0 or n == 0:
        return np.zeros(out_len, dtype=np.uint8)
    if s.shape[0] != n + out_len - 1:
        raise ValueError("seed length must be in_len + out_len - 1")

    cdef Py_ssize_t L = s.shape[0]
    cdef Py_ssize_t nw = (L + 63) // 64 + 1
    cdef Py_ssize_t mw = (out_len + 63) // 64
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] packed_arr = np.zeros(nw, dtype=np.uint64)
    cdef uint64_t[::1] packed = packed_arr
    cdef cnp.ndarray[cnp.uint64_t, ndim=2] shifted_arr = np.zeros((64, nw), dtype=np.uint64)
    cdef uint64_t[:, ::1] shifted = shifted_arr
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] acc_arr = np.zeros(mw, dtype=np.uint64)
    cdef uint64_t[::1] acc = acc_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out_arr = np.zeros(out_len, dtype=np.uint8)
    cdef uint8_t[::1] out = out_arr
    cdef Py_ssize_t i, j, w, t, o, w0, st
    cdef uint64_t one = 1

    for i in range(L):
        if s[i]:
            packed[i >> 6] |= one << (i & 63)
    # shifted[o, w] holds seed bits [64 w + o, 64 w + o + 64)
    for w in range(nw):
        shifted[0, w] = packed[w]
    for o in range(1, 64):
        for w in range(nw - 1):
            shifted[o, w] = (packed[w] >> o) | (packed[w + 1] << (64 - o))
        shifted[o, nw - 1] = packed[nw - 1] >> o

    for j in range(n):
        if xv[j]:
            st = n - 1 - j
            o = st & 63
            w0 = st >> 6
            for t in range(mw):
                acc[t] ^= shifted[o, w0 + t]

    for i in range(out_len):
        out[i] = <uint8_t>((acc[i >> 6] >> (i & 63)) & one)
    return out_arr


def csr_syndrome(row_ptr, col_idx, x):
    cdef const int64_t[::1] rp = np.ascontiguousarray(row_ptr, dtype=np.int64)
    cdef const int64_t[::1] ci = np.ascontiguousarray(col_idx, dtype=np.int64)
    cdef const uint8_t[::1] xv = np.ascontiguousarray(x, dtype=np.uint8)
    cdef Py_ssize_t n_rows = rp.shape[0] - 1
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out_arr = np.zeros(n_rows, dtype=np.uint8)
    cdef uint8_t[::1] out = out_arr
    cdef Py_ssize_t r, k
    cdef uint8_t acc
    for r in range(n_rows):
        acc = 0
        for k in range(rp[r], rp[r + 1]):
            acc ^= xv[ci[k]]
        out[r] = acc
    return out_arr


cdef bint _matches(const int64_t[::1] rp, const int64_t[::1] ci,
                   uint8_t[::1] e, const uint8_t[::1] syn) noexcept nogil:
    cdef Py_ssize_t r, k
    cdef uint8_t acc
    for r in range(rp.shape[0] - 1):
        acc = 0
        for k in range(rp[r], rp[r + 1]):
            acc ^= e[ci[k]]
        if acc != syn[r]:
            return False
    return True


def bp_decode(row_ptr, col_idx, Py_ssize_t n_vars, syndrome, prior_llr, int max_iter):
    cdef const int64_t[::1] rp = np.ascontiguousarray(row_ptr, dtype=np.int64)
    cdef const int64_t[::1] ci = np.ascontiguousarray(col_idx, dtype=np.int64)
    cdef const uint8_t[::1] syn = np.ascontiguousarray(syndrome, dtype=np.uint8)
    cdef const double[::1] prior = np.ascontiguousarray(prior_llr, dtype=np.float64)
    cdef Py_ssize_t n_rows = rp.shape[0] - 1
    cdef Py_ssize_t n_edges = ci.shape[0]

    cdef cnp.ndarray[cnp.uint8_t, ndim=1] e_arr = np.zeros(n_vars, dtype=np.uint8)
    cdef uint8_t[::1] e = e_arr
    cdef double[::1] v2c = np.empty(n_edges, dtype=np.float64)
    cdef double[::1] c2v = np.empty(n_edges, dtype=np.float64)
    cdef double[::1] tv = np.empty(n_edges, dtype=np.float64)
    cdef double[::1] post = np.empty(n_vars, dtype=np.float64)

    cdef Py_ssize_t r, k, v
    cdef int it
    cdef double t, mag, prod, ext
    cdef double lo = 1e-15
    cdef double hi = 1.0 - 1e-15

    for v in range(n_vars):
        e[v] = 1 if prior[v] < 0 else 0
    if _matches(rp, ci, e, syn):
        return e_arr, True, 0

    for k in range(n_edges):
        v2c[k] = prior[ci[k]]

    with nogil:
        for it in range(1, max_iter + 1):
            for r in range(n_rows):
                prod = -1.0 if syn[r] else 1.0
                for k in range(rp[r], rp[r + 1]):
                    # tanh(x/2) = (1 - e^-|x|) / (1 + e^-|x|) with the sign of x
                    mag = exp(-fabs(v2c[k]))
                    mag = (1.0 - mag) / (1.0 + mag)
                    t = -mag if v2c[k] < 0 else mag
                    if mag < lo:
                        mag = lo
                    elif mag > hi:
                        mag = hi
                    tv[k] = -mag if t < 0 else mag
                    prod *= tv[k]
                for k in range(rp[r], rp[r + 1]):
                    ext = prod / tv[k]
                    if ext > hi:
                        ext = hi
                    elif ext < -hi:
                        ext = -hi
                    # 2 atanh(y) = log1p(2y / (1 - y))
                    c2v[k] = log1p(2.0 * ext / (1.0 - ext))

            for v in range(n_vars):
                post[v] = prior[v]
            for k in range(n_edges):
                post[ci[k]] += c2v[k]
            for v in range(n_vars):
                e[v] = 1 if post[v] < 0 else 0
            if _matches(rp, ci, e, syn):
                with gil:
                    return e_arr, True, it
            for k in range(n_edges):
                v2c[k] = post[ci[k]] - c2v[k]
    return e_arr, False, max_iter
