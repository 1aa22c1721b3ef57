# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: CSR matrix x dense matrix and row scatter-add.

These two kernels dominate the runtime of the graph aggregation layers
(forward and reverse pass) on large meshes.  `pdmesh.backend` falls back
to numpy implementations when this module is not built.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_matmat(const cnp.int64_t[::1] indptr,
               const cnp.int64_t[::1] indices,
               const cnp.float64_t[::1] data,
               const cnp.float64_t[:, ::1] dense):
    """Return (CSR matrix) @ dense, row-sequential accumulation order."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t k = dense.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n_rows, k))
    cdef cnp.float64_t[:, ::1] out_v = out
    cdef Py_ssize_t i, j, c, p
    cdef cnp.float64_t v
    with nogil:
        for i in range(n_rows):
            for p in range(indptr[i], indptr[i + 1]):
                c = indices[p]
                v = data[p]
                for j in range(k):
                    out_v[i, j] += v * dense[c, j]
    return out


def scatter_add_rows(cnp.float64_t[:, ::1] out,
                     const cnp.int64_t[::1] idx,
                     const cnp.float64_t[:, ::1] src):
    """out[idx[i], :] += src[i, :], sequential in i (deterministic)."""
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t k = src.shape[1]
    cdef Py_ssize_t i, j, r
    with nogil:
        for i in range(n):
            r = idx[i]
            for j in range(k):
                out[r, j] += src[i, j]
