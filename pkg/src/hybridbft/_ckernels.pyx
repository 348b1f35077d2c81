# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics must match ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()

cdef int64_t NEVER = 1 << 62


def kth_arrivals(const int64_t[::1] send, const int64_t[:, ::1] lat, int k):
    """For every receiver r, the k-th smallest ``send[s] + lat[s, r]``.

    Senders with ``send[s] >= NEVER`` do not send. Receivers that see fewer
    than ``k`` messages get ``NEVER``.
    """
    cdef Py_ssize_t n = send.shape[0]
    cdef Py_ssize_t r, s, i, j
    cdef int64_t t, tmp
    out_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    # insertion buffer of the k smallest arrivals, k <= n
    buf_arr = np.empty(max(k, 1), dtype=np.int64)
    cdef int64_t[::1] buf = buf_arr
    cdef Py_ssize_t filled
    for r in range(n):
        filled = 0
        for s in range(n):
            if send[s] >= NEVER:
                continue
            t = send[s] + lat[s, r]
            if filled < k:
                i = filled
                filled += 1
            elif t < buf[k - 1]:
                i = k - 1
            else:
                continue
            while i > 0 and buf[i - 1] > t:
                buf[i] = buf[i - 1]
                i -= 1
            buf[i] = t
        out[r] = buf[k - 1] if filled >= k else NEVER
    return out_arr


def covered_sum(const int64_t[:, ::1] points, const int64_t[::1] amounts,
                Py_ssize_t nrows, const int64_t[::1] state):
    """Sum of ``amounts[j]`` over rows with ``points[j, :] <= state``."""
    cdef Py_ssize_t m = state.shape[0]
    cdef Py_ssize_t j, c
    cdef int64_t total = 0
    cdef bint ok
    for j in range(nrows):
        ok = True
        for c in range(m):
            if points[j, c] > state[c]:
                ok = False
                break
        if ok:
            total += amounts[j]
    return total


def mix64(uint64_t key_hash, int64_t value):
    """Order-free contribution of one (key, value) pair to a store hash."""
    cdef uint64_t z = key_hash ^ (<uint64_t>value * 0x9E3779B97F4A7C15ULL)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)
