# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR @ dense kernel (the hot loop of every propagation step)."""

import numpy as np


def csr_matmul(const long long[::1] indptr not None,
               const long long[::1] indices not None,
               const double[::1] data not None,
               const double[:, ::1] dense not None):
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t n_cols = dense.shape[1]
    out_arr = np.zeros((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, j
    cdef long long col
    cdef double c
    for i in range(n_rows):
        for k in range(indptr[i], indptr[i + 1]):
            col = indices[k]
            c = data[k]
            for j in range(n_cols):
                out[i, j] += c * dense[col, j]
    return out_arr
