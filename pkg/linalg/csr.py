"""
Compressed sparse row storage
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from common.errors import InvalidArgumentError


@dataclass(eq=False)
class CsrMatrix:
    """Plain CSR arrays (row_ptr / col_idx / values)"""
    num_rows: int
    num_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_ptr = np.asarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(self.col_idx, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.row_ptr) != self.num_rows + 1 or self.row_ptr[0] != 0:
            raise InvalidArgumentError("row_ptr must have num_rows + 1 entries starting at 0")
        if np.any(np.diff(self.row_ptr) < 0):
            raise InvalidArgumentError("row_ptr must be non-decreasing")
        if self.row_ptr[-1] != len(self.col_idx) or len(self.col_idx) != len(self.values):
            raise InvalidArgumentError("row_ptr[-1], col_idx and values disagree on nnz")
        if len(self.col_idx) and (self.col_idx.min() < 0 or self.col_idx.max() >= self.num_cols):
            raise InvalidArgumentError(f"column index outside [0, {self.num_cols})")

    @property
    def num_nonzeros(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self):
        return self.num_rows, self.num_cols

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values.copy(), self.col_idx.copy(), self.row_ptr.copy()),
                             shape=self.shape)

    def row(self, i: int):
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    @classmethod
    def from_scipy(cls, matrix) -> "CsrMatrix":
        m = sp.csr_matrix(matrix)
        return cls(m.shape[0], m.shape[1], m.indptr.copy(), m.indices.copy(), m.data.copy())

    @classmethod
    def from_dense(cls, dense) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(dense, dtype=float)))
