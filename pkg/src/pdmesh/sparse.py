"""Row-compressed sparse matrices for graph operators.

Every adjacency, incidence, degree, and Laplacian matrix in the package
is a :class:`SparseMatrix`.  Instances are immutable after construction
and safe to share across threads; the dense product routes through
:mod:`pdmesh.backend` (compiled kernel or numpy fallback).
"""

from __future__ import annotations

import numpy as np

from . import backend


class SparseMatrix:
    """Immutable CSR matrix of float64 values.

    Parameters
    ----------
    shape : (rows, cols)
    rows, cols : 1-d integer arrays, one entry per stored value
    values : 1-d float array, same length

    Duplicate (row, col) pairs and out-of-range indices are rejected.
    """

    __slots__ = ("shape", "indptr", "indices", "data", "_transpose")

    def __init__(self, shape, rows, cols, values):
        n_rows, n_cols = int(shape[0]), int(shape[1])
        if n_rows < 0 or n_cols < 0:
            raise ValueError("negative matrix dimensions")
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
            raise ValueError("rows, cols, values must be equal-length 1-d arrays")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size > 1:
            same = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if same.any():
                raise ValueError("duplicate (row, col) entry")
        self.shape = (n_rows, n_cols)
        self.indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(self.indptr, rows + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.indices = cols
        self.data = values
        self._transpose = None

    @classmethod
    def diagonal(cls, values) -> "SparseMatrix":
        values = np.asarray(values, dtype=np.float64)
        idx = np.arange(values.size)
        return cls((values.size, values.size), idx, idx, values)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.diagonal(np.ones(n))

    @property
    def nnz(self) -> int:
        return self.data.size

    def row_entries(self):
        """Yield (row, col, value) triples in row-major order."""
        for i in range(self.shape[0]):
            for p in range(self.indptr[i], self.indptr[i + 1]):
                yield i, int(self.indices[p]), float(self.data[p])

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        """Dense product self @ dense for a 2-d float64 array."""
        dense = np.ascontiguousarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != self.shape[1]:
            raise ValueError(
                f"shape mismatch: {self.shape} @ {dense.shape}")
        return backend.csr_matmat(self.indptr, self.indices, self.data, dense)

    def transpose(self) -> "SparseMatrix":
        """Transposed copy; cached, since adjoints reuse it every step."""
        if self._transpose is None:
            rows = np.repeat(np.arange(self.shape[0], dtype=np.int64),
                             np.diff(self.indptr))
            t = SparseMatrix((self.shape[1], self.shape[0]),
                             self.indices, rows, self.data)
            self._transpose = t
        return self._transpose

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def row_sums(self) -> np.ndarray:
        out = np.zeros(self.shape[0])
        np.add.at(out, np.repeat(np.arange(self.shape[0]), np.diff(self.indptr)),
                  self.data)
        return out

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"
