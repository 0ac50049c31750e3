"""
Incomplete LU factorizations: ILU(0), ILU(k) and ILUT

All three run the row-wise IKJ elimination. L is unit lower triangular
(the unit diagonal is stored), U is upper triangular with its diagonal.
Small pivots are shifted to sign(d) * max(|d|, 1e-12 * ||row||).
"""

import heapq
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from common.errors import InvalidArgumentError, SingularPivotError
from linalg.csr import CsrMatrix

PIVOT_SHIFT = 1e-12


@dataclass(eq=False)
class IluFactors:
    L: CsrMatrix
    U: CsrMatrix
    variant: str
    options: Dict = field(default_factory=dict)

    @cached_property
    def _lower(self) -> sp.csr_matrix:
        m = self.L.to_scipy()
        m.sort_indices()
        return m

    @cached_property
    def _upper(self) -> sp.csr_matrix:
        m = self.U.to_scipy()
        m.sort_indices()
        return m


def _as_scipy(matrix) -> sp.csr_matrix:
    m = matrix.to_scipy() if isinstance(matrix, CsrMatrix) else sp.csr_matrix(matrix)
    if m.shape[0] != m.shape[1]:
        raise InvalidArgumentError(f"ILU needs a square matrix, got {m.shape}")
    m = m.copy()
    m.sum_duplicates()
    m.sort_indices()
    return m


def _fix_pivot(d: float, row_norm: float, i: int) -> float:
    if row_norm == 0.0:
        raise SingularPivotError(i)
    floor = PIVOT_SHIFT * row_norm
    if abs(d) >= floor:
        return d
    return floor if d >= 0 else -floor


def _pack(n: int, rows: List[List[Tuple[int, float]]]) -> CsrMatrix:
    indptr = np.zeros(n + 1, dtype=np.int64)
    cols, vals = [], []
    for i, row in enumerate(rows):
        row.sort()
        indptr[i + 1] = indptr[i] + len(row)
        cols.extend(c for c, _ in row)
        vals.extend(v for _, v in row)
    return CsrMatrix(n, n, indptr, np.array(cols, dtype=np.int64), np.array(vals, dtype=float))


class _Elimination(ABC):
    """Shared IKJ driver; subclasses decide what fill survives"""

    def __init__(self, matrix):
        self.A = _as_scipy(matrix)
        self.n = self.A.shape[0]
        self.diag = np.zeros(self.n)
        self.upper: List[List[Tuple[int, float]]] = []  # strictly upper part of U rows
        self.lower: List[List[Tuple[int, float]]] = []

    def original_row(self, i: int) -> Dict[int, float]:
        lo, hi = self.A.indptr[i], self.A.indptr[i + 1]
        return dict(zip(self.A.indices[lo:hi].tolist(), self.A.data[lo:hi].tolist()))

    @abstractmethod
    def eliminate_row(self, i: int, row: Dict[int, float]) -> Dict[int, float]:
        """Eliminated row i: multipliers left of the diagonal, U entries from it on"""
        raise NotImplementedError

    def run(self, variant: str, options: Dict) -> IluFactors:
        for i in range(self.n):
            row = self.original_row(i)
            row_norm = float(np.sqrt(sum(v * v for v in row.values())))
            row = self.eliminate_row(i, row)
            self.diag[i] = _fix_pivot(row.get(i, 0.0), row_norm, i)
            self.lower.append([(k, v) for k, v in row.items() if k < i])
            self.upper.append([(j, v) for j, v in row.items() if j > i])
            self.finish_row(i)
        L_rows = [low + [(i, 1.0)] for i, low in enumerate(self.lower)]
        U_rows = [[(i, self.diag[i])] + up for i, up in enumerate(self.upper)]
        return IluFactors(_pack(self.n, L_rows), _pack(self.n, U_rows), variant, options)

    def finish_row(self, i: int):
        pass


class _Ilu0(_Elimination):
    def eliminate_row(self, i, row):
        for k in sorted(c for c in row if c < i):
            l = row[k] / self.diag[k]
            row[k] = l
            for j, u in self.upper[k]:
                if j in row:
                    row[j] -= l * u
        return row


class _IluK(_Elimination):
    def __init__(self, matrix, level: int):
        super().__init__(matrix)
        self.level = level
        self.upper_levels: List[Dict[int, int]] = []

    def eliminate_row(self, i, row):
        lev = {c: 0 for c in row}
        heap = [c for c in row if c < i]
        heapq.heapify(heap)
        done = set()
        while heap:
            k = heapq.heappop(heap)
            if k in done:
                continue
            done.add(k)
            l = row[k] / self.diag[k]
            row[k] = l
            ulev = self.upper_levels[k]
            for j, u in self.upper[k]:
                fill = lev[k] + ulev[j] + 1
                if j in row:
                    row[j] -= l * u
                    lev[j] = min(lev[j], fill)
                elif fill <= self.level:
                    row[j] = -l * u
                    lev[j] = fill
                    if j < i:
                        heapq.heappush(heap, j)
        self._row_levels = lev
        return row

    def finish_row(self, i):
        # levels of U rows are needed while later rows are eliminated
        self.upper_levels.append({j: self._row_levels[j] for j, _ in self.upper[i]})


class _Ilut(_Elimination):
    def __init__(self, matrix, p: int, tol: float):
        super().__init__(matrix)
        self.p = p
        self.tol = tol

    def eliminate_row(self, i, row):
        n_lower = sum(1 for c in row if c < i)
        n_upper = sum(1 for c in row if c > i)
        tau = self.tol * float(np.sqrt(sum(v * v for v in row.values())))
        heap = [c for c in row if c < i]
        heapq.heapify(heap)
        done = set()
        while heap:
            k = heapq.heappop(heap)
            if k in done:
                continue
            done.add(k)
            l = row[k] / self.diag[k]
            if abs(l) < tau:
                del row[k]
                continue
            row[k] = l
            for j, u in self.upper[k]:
                if j in row:
                    row[j] -= l * u
                else:
                    row[j] = -l * u
                    if j < i:
                        heapq.heappush(heap, j)
        kept = {i: row.get(i, 0.0)}
        lower = [(c, v) for c, v in row.items() if c < i and abs(v) >= tau]
        upper = [(c, v) for c, v in row.items() if c > i and abs(v) >= tau]
        if self.p >= 0:
            lower = sorted(lower, key=lambda cv: (-abs(cv[1]), cv[0]))[:n_lower + self.p]
            upper = sorted(upper, key=lambda cv: (-abs(cv[1]), cv[0]))[:n_upper + self.p]
        kept.update(lower)
        kept.update(upper)
        return kept


def ilu0_factor(csr) -> IluFactors:
    return _Ilu0(csr).run("ilu0", {})


def iluk_factor(csr, level: int) -> IluFactors:
    if level < 0:
        raise InvalidArgumentError(f"fill level must be >= 0, got {level}")
    return _IluK(csr, level).run("iluk", {"level": level})


def ilut_factor(csr, p: int = -1, tol: float = 1e-3) -> IluFactors:
    """Threshold ILU; p extra entries per L and U row part, p = -1 for no cap"""
    if tol < 0:
        raise InvalidArgumentError(f"drop tolerance must be >= 0, got {tol}")
    return _Ilut(csr, p, tol).run("ilut", {"p": p, "tol": tol})


def lu_solve(factors: IluFactors, b: np.ndarray) -> np.ndarray:
    """Forward then backward substitution"""
    b = np.asarray(b, dtype=float)
    if factors.L.num_rows == 0:
        return b.copy()
    y = spsolve_triangular(factors._lower, b, lower=True, unit_diagonal=True)
    return spsolve_triangular(factors._upper, y, lower=False)
