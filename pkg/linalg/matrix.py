"""
Row-distributed sparse matrix
Entries are collected per row before assembly and packed into a local CSR
block afterwards; columns owned elsewhere become halo slots.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from common.errors import (AlreadyAssembledError, InvalidArgumentError, MapMismatchError,
                           NotAssembledError, WrongOwnerError)
from linalg.csr import CsrMatrix
from linalg.vector import DistVector
from runtime.index_map import IndexMap, build_comm_plan, exchange
from runtime.ranks import serial_context


class DistMatrix:
    """Owned rows of a distributed matrix"""

    def __init__(self, row_map: IndexMap, ctx=None, col_offsets: Optional[np.ndarray] = None):
        self.ctx = ctx if ctx is not None else serial_context()
        self.row_map = row_map.owned_map()
        self.col_offsets = np.asarray(row_map.offsets if col_offsets is None else col_offsets, dtype=np.int64)
        if len(self.col_offsets) != len(self.row_map.offsets):
            raise InvalidArgumentError("column offsets must list one range per rank")
        self._rows: Optional[List[Dict[int, float]]] = [dict() for _ in range(self.row_map.nlocal)]
        self.assembled = False
        self.col_map: Optional[IndexMap] = None
        self.plan = None
        self.local: Optional[sp.csr_matrix] = None
        self._xbuf: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.row_map.nglobal, int(self.col_offsets[-1])

    @property
    def nlocal(self) -> int:
        return self.row_map.nlocal

    def add_entry(self, global_row: int, global_col: int, value: float):
        if self.assembled:
            raise AlreadyAssembledError("matrix is assembled and read-only")
        r = int(global_row) - self.row_map.first
        if r < 0 or r >= self.row_map.nlocal:
            raise WrongOwnerError(f"row {global_row} is not owned by rank {self.row_map.rank}")
        c = int(global_col)
        if c < 0 or c >= self.shape[1]:
            raise InvalidArgumentError(f"column {c} outside [0, {self.shape[1]})")
        row = self._rows[r]
        row[c] = row.get(c, 0.0) + float(value)

    def add_entries(self, rows: Sequence[int], cols: Sequence[int], values: Sequence[float]):
        for r, c, v in zip(np.asarray(rows).tolist(), np.asarray(cols).tolist(),
                           np.asarray(values, dtype=float).tolist()):
            self.add_entry(r, c, v)

    def assemble(self):
        """Collective: fix the column map, build the halo plan, pack CSR"""
        if self.assembled:
            raise AlreadyAssembledError("matrix already assembled")
        rank = self.row_map.rank
        col_first = int(self.col_offsets[rank])
        col_last = int(self.col_offsets[rank + 1])
        counts = np.array([len(row) for row in self._rows], dtype=np.int64)
        gcols = np.empty(int(counts.sum()), dtype=np.int64)
        data = np.empty(len(gcols))
        pos = 0
        for row in self._rows:
            # entries ordered by global column
            for c in sorted(row):
                gcols[pos] = c
                data[pos] = row[c]
                pos += 1
        remote = gcols[(gcols < col_first) | (gcols >= col_last)]
        self.col_map = IndexMap(rank, self.col_offsets, np.unique(remote))
        indices = self.col_map.global_to_local(gcols) if len(gcols) else np.empty(0, dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.local = sp.csr_matrix((data, indices, indptr), shape=(self.nlocal, self.col_map.ntlocal))
        self.plan = build_comm_plan(self.col_map, self.ctx)
        self._xbuf = np.zeros(self.col_map.ntlocal)
        self._rows = None
        self.assembled = True
        return self

    def _require_assembled(self):
        if not self.assembled:
            raise NotAssembledError("matrix is not assembled")

    def create_vector(self, values: Optional[np.ndarray] = None) -> DistVector:
        return DistVector(self.row_map, None if values is None else np.asarray(values, dtype=float).copy(), self.ctx)

    def column_vector(self, values: Optional[np.ndarray] = None) -> DistVector:
        return DistVector(IndexMap(self.row_map.rank, self.col_offsets),
                          None if values is None else np.asarray(values, dtype=float).copy(), self.ctx)

    def global_cols(self) -> np.ndarray:
        """Global column of every stored entry"""
        self._require_assembled()
        return self.col_map.l2g[self.local.indices]

    def local_coo(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Owned entries as (global row, global col, value)"""
        self._require_assembled()
        rows = self.row_map.first + np.repeat(np.arange(self.nlocal), np.diff(self.local.indptr))
        return rows, self.global_cols(), self.local.data.copy()

    def diagonal(self) -> np.ndarray:
        """Diagonal of the owned rows (square matrices)"""
        rows, cols, vals = self.local_coo()
        diag = np.zeros(self.nlocal)
        on = rows == cols
        diag[rows[on] - self.row_map.first] = vals[on]
        return diag

    def exchanged_columns(self, x_owned: np.ndarray) -> np.ndarray:
        """Exchanged column buffer for owned values of x"""
        self._require_assembled()
        buf = self._xbuf
        buf[:self.col_map.nlocal] = x_owned
        exchange(self.plan, buf, self.ctx)
        return buf


def spmv(alpha: float, A: DistMatrix, x: DistVector, beta: float, y: DistVector,
         out: Optional[DistVector] = None) -> DistVector:
    """y := alpha A x + beta y, or z := alpha A x + beta y when out is given"""
    if not A.assembled:
        raise NotAssembledError("spmv on an unassembled matrix")
    if x.map.rank != A.row_map.rank or not np.array_equal(x.map.offsets, A.col_offsets):
        raise MapMismatchError("x does not match the matrix column distribution")
    if not y.map.same_layout(A.row_map):
        raise MapMismatchError("y does not match the matrix row distribution")
    ax = A.local @ A.exchanged_columns(x.owned)
    target = y if out is None else out
    if beta == 0.0:
        target.owned = alpha * ax
    else:
        target.owned = alpha * ax + beta * y.owned
    return target


def residual(A: DistMatrix, b: DistVector, x: DistVector) -> DistVector:
    """r = b - A x"""
    r = b.copy()
    return spmv(-1.0, A, x, 1.0, r)


def extract_local_csr(A: DistMatrix) -> CsrMatrix:
    """Owned rows with owned + halo columns in local numbering"""
    if not A.assembled:
        raise NotAssembledError("extract_local_csr on an unassembled matrix")
    return CsrMatrix.from_scipy(A.local)


def fetch_rows(A: DistMatrix, wanted: Sequence[int]) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """Collective: global rows (global columns, values) from their owners"""
    ctx = A.ctx
    wanted = np.unique(np.asarray(wanted, dtype=np.int64))
    owners = A.row_map.owner_of(wanted)
    incoming = ctx.alltoall([wanted[owners == p] for p in range(ctx.nprocs)])
    gcols_all = A.global_cols()
    indptr = A.local.indptr
    replies = []
    for request in incoming:
        rows = np.asarray(request, dtype=np.int64) - A.row_map.first
        counts = indptr[rows + 1] - indptr[rows]
        picks = np.concatenate([np.arange(indptr[r], indptr[r + 1]) for r in rows]) \
            if len(rows) else np.empty(0, dtype=np.int64)
        replies.append((np.asarray(request, dtype=np.int64), counts, gcols_all[picks], A.local.data[picks]))
    answers = ctx.alltoall(replies)
    result = {}
    for request, counts, gcols, vals in answers:
        start = 0
        for g, n in zip(request.tolist(), counts.tolist()):
            result[g] = (gcols[start:start + n], vals[start:start + n])
            start += n
    return result


def gather_global_csr(A: DistMatrix) -> sp.csr_matrix:
    """Collective: whole matrix on every rank, global numbering"""
    rows, cols, vals = A.local_coo()
    parts = A.ctx.allgather((rows, cols, vals))
    r = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    return sp.csr_matrix((v, (r, c)), shape=A.shape)


def from_global_csr(matrix, row_map: IndexMap, ctx=None,
                    col_offsets: Optional[np.ndarray] = None) -> DistMatrix:
    """Collective: assemble the owned rows of a replicated global matrix"""
    m = sp.csr_matrix(matrix)
    A = DistMatrix(row_map, ctx, col_offsets)
    for r in range(A.row_map.first, A.row_map.first + A.nlocal):
        lo, hi = m.indptr[r], m.indptr[r + 1]
        row = A._rows[r - A.row_map.first]
        for c, v in zip(m.indices[lo:hi].tolist(), m.data[lo:hi].tolist()):
            row[c] = row.get(c, 0.0) + v
    return A.assemble()


def from_local_coo(rows, cols, vals, row_map: IndexMap, ctx=None,
                   col_offsets: Optional[np.ndarray] = None) -> DistMatrix:
    """Collective: assemble owned entries given in global numbering"""
    A = DistMatrix(row_map, ctx, col_offsets)
    A.add_entries(rows, cols, vals)
    return A.assemble()
