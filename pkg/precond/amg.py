"""
Classical algebraic multigrid
Setup: strength of connection, Ruge-Stueben C/F splitting (per rank),
direct interpolation, Galerkin coarse operators. Solve: V-cycle with
hybrid Gauss-Seidel smoothing and an exact coarsest solve.

Coarsening only looks at couplings inside a rank. Off-rank couplings still
enter the interpolation weights, but a point never interpolates from a
coarse point owned by another rank, so P has no halo columns.
"""

import heapq
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve as dense_lu_solve
from scipy.sparse.linalg import spsolve_triangular

from common.errors import InvalidArgumentError
from linalg.matrix import DistMatrix, fetch_rows, from_local_coo, gather_global_csr
from linalg.vector import DistVector
from precond.base import Preconditioner
from reporting.run_logger import get_run_logger
from runtime.index_map import IndexMap, offsets_from_sizes

SMOOTHERS = ("gs-h-forward", "gs-h-backward", "gs-h-symmetric")
COARSEST_SOLVERS = ("direct", "smoother")

C_POINT = 1
F_POINT = -1
_UNDECIDED = 0


@dataclass
class AmgParams:
    maxit: int = 1
    num_funcs: int = -1
    max_levels: int = 6
    strength: float = 0.5
    max_row_sum: float = 0.9
    trunc_tol: float = 1e-2
    coarsen_type: str = "rs"
    cycle_type: str = "v"
    smoother: str = "gs-h-forward"
    coarsest_smoother: str = "gs-h-symmetric"
    coarsest_solver: str = "direct"
    sweeps: int = 2
    coarse_size: int = 32

    def __post_init__(self):
        if self.max_levels < 1:
            raise InvalidArgumentError(f"max_levels must be >= 1, got {self.max_levels}")
        if not 0.0 <= self.strength <= 1.0:
            raise InvalidArgumentError(f"strength must be in [0, 1], got {self.strength}")
        if self.maxit < 1 or self.sweeps < 0:
            raise InvalidArgumentError("maxit must be >= 1 and sweeps >= 0")
        if self.coarsen_type != "rs":
            raise InvalidArgumentError(f"Unknown coarsening: {self.coarsen_type}")
        if self.cycle_type != "v":
            raise InvalidArgumentError(f"Unknown cycle type: {self.cycle_type}")
        for smoother in (self.smoother, self.coarsest_smoother):
            if smoother not in SMOOTHERS:
                raise InvalidArgumentError(f"Unknown smoother: {smoother}")
        if self.coarsest_solver not in COARSEST_SOLVERS:
            raise InvalidArgumentError(f"Unknown coarsest solver: {self.coarsest_solver}")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "AmgParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (data or {}).items() if k in names})


class _Smoother:
    """Hybrid Gauss-Seidel: exact triangular sweep on owned rows, halo values frozen"""

    def __init__(self, A: DistMatrix):
        self.A = A
        n = A.nlocal
        own = A.local[:, :n].tocsr()
        self.lower = sp.tril(own, format="csr")
        self.upper = sp.triu(own, format="csr")
        self.strict_lower = sp.tril(own, k=-1, format="csr")
        self.strict_upper = sp.triu(own, k=1, format="csr")
        self.halo = A.local[:, n:].tocsr()
        for m in (self.lower, self.upper):
            m.sort_indices()

    def _halo_part(self, x: np.ndarray) -> np.ndarray:
        buf = self.A.exchanged_columns(x)
        return self.halo @ buf[self.A.nlocal:]

    def forward(self, b, x):
        rhs = b - self.strict_upper @ x - self._halo_part(x)
        return spsolve_triangular(self.lower, rhs, lower=True)

    def backward(self, b, x):
        rhs = b - self.strict_lower @ x - self._halo_part(x)
        return spsolve_triangular(self.upper, rhs, lower=False)

    def smooth(self, kind: str, b, x, sweeps: int):
        if self.A.nlocal == 0:
            return x
        for _ in range(sweeps):
            if kind in ("gs-h-forward", "gs-h-symmetric"):
                x = self.forward(b, x)
            if kind in ("gs-h-backward", "gs-h-symmetric"):
                x = self.backward(b, x)
        return x


@dataclass(eq=False)
class AmgLevel:
    A: DistMatrix
    P: Optional[DistMatrix] = None
    splitting: Optional[np.ndarray] = None  # C_POINT / F_POINT per owned row
    smoother: Optional[_Smoother] = None

    @property
    def nglobal(self) -> int:
        return self.A.shape[0]


@dataclass(eq=False)
class AmgHierarchy:
    levels: List[AmgLevel]
    params: AmgParams
    coarse_lu: Any = None
    coarse_first: int = 0
    stats: Dict = field(default_factory=dict)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def operator_complexity(self) -> float:
        nnz = [lvl.A.ctx.allreduce_sum(int(lvl.A.local.nnz)) for lvl in self.levels]
        return float(sum(nnz)) / nnz[0] if nnz[0] else 1.0


def strength_graph(local: sp.csr_matrix, nlocal: int, theta: float,
                   max_row_sum: float) -> Tuple[List[np.ndarray], np.ndarray]:
    """Strong dependencies among owned rows.

    i depends strongly on j when -a_ij >= theta * max_{k != i} (-a_ik); the max
    runs over all couplings including off-rank ones. Rows whose full row sum
    exceeds max_row_sum * |a_ii| get no strong dependencies and are flagged.
    """
    strong: List[np.ndarray] = []
    flagged = np.zeros(nlocal, dtype=bool)
    for i in range(nlocal):
        lo, hi = local.indptr[i], local.indptr[i + 1]
        cols = local.indices[lo:hi]
        vals = local.data[lo:hi]
        off = cols != i
        diag = vals[~off].sum()
        if max_row_sum < 1.0 and abs(vals.sum()) > max_row_sum * abs(diag):
            flagged[i] = True
            strong.append(np.empty(0, dtype=np.int64))
            continue
        neg = -vals[off]
        top = neg.max() if len(neg) else 0.0
        if top <= 0.0:
            strong.append(np.empty(0, dtype=np.int64))
            continue
        picks = cols[off][(neg >= theta * top) & (cols[off] < nlocal)]
        strong.append(np.sort(picks).astype(np.int64))
    return strong, flagged


def rs_coarsen(strong: List[np.ndarray], flagged: np.ndarray) -> np.ndarray:
    """Two-pass Ruge-Stueben splitting; returns C_POINT / F_POINT per row"""
    n = len(strong)
    influences = [[] for _ in range(n)]  # S^T: rows that depend on i
    for i, s in enumerate(strong):
        for j in s.tolist():
            influences[j].append(i)
    split = np.full(n, _UNDECIDED, dtype=np.int64)
    split[flagged] = F_POINT
    for i in range(n):
        if not flagged[i] and len(strong[i]) == 0:
            # all-weak rows are their own coarse points
            split[i] = C_POINT
    measure = np.array([sum(1 for k in influences[i] if split[k] == _UNDECIDED) for i in range(n)],
                       dtype=np.int64)
    heap = [(-int(measure[i]), i) for i in range(n) if split[i] == _UNDECIDED]
    heapq.heapify(heap)

    # first pass: largest measure first, lowest index on ties
    while heap:
        neg, i = heapq.heappop(heap)
        if split[i] != _UNDECIDED or -neg != measure[i]:
            continue
        if measure[i] == 0:
            break
        split[i] = C_POINT
        for j in influences[i]:
            if split[j] != _UNDECIDED:
                continue
            split[j] = F_POINT
            for k in strong[j].tolist():
                if split[k] == _UNDECIDED:
                    measure[k] += 1
                    heapq.heappush(heap, (-int(measure[k]), k))
        for k in strong[i].tolist():
            if split[k] == _UNDECIDED and measure[k] > 0:
                measure[k] -= 1
                heapq.heappush(heap, (-int(measure[k]), k))

    # nobody left depends on the remaining points
    for i in np.flatnonzero(split == _UNDECIDED).tolist():
        split[i] = F_POINT if np.any(split[strong[i]] == C_POINT) else C_POINT

    # second pass: F-F strong pairs need a common C point
    for i in range(n):
        if split[i] != F_POINT or flagged[i]:
            continue
        c_i = strong[i][split[strong[i]] == C_POINT]
        if len(c_i) == 0:
            split[i] = C_POINT
            continue
        for j in strong[i][split[strong[i]] == F_POINT].tolist():
            if flagged[j]:
                continue
            if not np.any(np.isin(strong[j], c_i)):
                split[j] = C_POINT
                c_i = np.append(c_i, j)
    return split


def direct_interpolation(local: sp.csr_matrix, nlocal: int, strong: List[np.ndarray],
                         split: np.ndarray, flagged: np.ndarray, trunc_tol: float,
                         coarse_first: int):
    """Rows (global coarse col, weight) of P for the owned points"""
    coarse_index = np.cumsum(split == C_POINT) - 1 + coarse_first
    rows, cols, vals = [], [], []
    for i in range(nlocal):
        if split[i] == C_POINT:
            rows.append(i)
            cols.append(int(coarse_index[i]))
            vals.append(1.0)
            continue
        if flagged[i]:
            continue
        lo, hi = local.indptr[i], local.indptr[i + 1]
        c = local.indices[lo:hi]
        a = local.data[lo:hi]
        off = c != i
        a_ii = a[~off].sum()
        c_off, a_off = c[off], a[off]
        interp = np.isin(c_off, strong[i]) & (c_off < nlocal)
        interp[interp] = split[c_off[interp]] == C_POINT
        if not np.any(interp):
            continue
        neg_all = a_off[a_off < 0].sum()
        pos_all = a_off[a_off > 0].sum()
        a_ci = a_off[interp]
        neg_c = a_ci[a_ci < 0].sum()
        pos_c = a_ci[a_ci > 0].sum()
        alpha = neg_all / neg_c if neg_c != 0.0 else 0.0
        if pos_c != 0.0:
            beta = pos_all / pos_c
        else:
            beta = 0.0
            a_ii = a_ii + pos_all
        w = np.where(a_ci < 0, -alpha * a_ci / a_ii, -beta * a_ci / a_ii)
        w_cols = coarse_index[c_off[interp]]
        if trunc_tol > 0.0 and len(w):
            keep = np.abs(w) >= trunc_tol * np.abs(w).max()
            total, kept = w.sum(), w[keep].sum()
            w = w[keep] * (total / kept) if kept != 0.0 else w[keep]
            w_cols = w_cols[keep]
        rows.extend([i] * len(w))
        cols.extend(w_cols.tolist())
        vals.extend(w.tolist())
    return (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=float))


def galerkin_product(A, P) -> sp.csr_matrix:
    """Serial R A P with R = P^T"""
    A = sp.csr_matrix(A)
    P = sp.csr_matrix(P)
    return (P.T @ A @ P).tocsr()


def distributed_galerkin(A: DistMatrix, P: DistMatrix) -> DistMatrix:
    """Collective: P^T A P; each rank's contributions land in coarse rows it owns"""
    ctx = A.ctx
    nc_global = P.shape[1]
    fetched = fetch_rows(P, A.col_map.halo)
    rows, cols, vals = [], [], []
    p_rows, p_cols, p_vals = P.local_coo()
    rows.append(p_rows - P.row_map.first)
    cols.append(p_cols)
    vals.append(p_vals)
    for slot, g in enumerate(A.col_map.halo.tolist(), start=A.nlocal):
        c, v = fetched[g]
        rows.append(np.full(len(c), slot, dtype=np.int64))
        cols.append(c)
        vals.append(v)
    P_ext = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(A.col_map.ntlocal, nc_global))
    AP = A.local @ P_ext
    lo, hi = int(P.col_offsets[ctx.rank]), int(P.col_offsets[ctx.rank + 1])
    P_own = P_ext[:A.nlocal, lo:hi]
    coarse = (P_own.T @ AP).tocoo()
    coarse_map = IndexMap(ctx.rank, P.col_offsets)
    return from_local_coo(coarse.row + lo, coarse.col, coarse.data, coarse_map, ctx)


def amg_setup(A: DistMatrix, params: Optional[AmgParams] = None) -> AmgHierarchy:
    """Collective: build the multigrid hierarchy of A"""
    params = params or AmgParams()
    ctx = A.ctx
    if A.shape[0] != A.shape[1] or not np.array_equal(A.col_offsets, A.row_map.offsets):
        raise InvalidArgumentError(f"AMG needs a square matrix with matching row/column layout, got {A.shape}")
    levels: List[AmgLevel] = []
    current = A
    while True:
        level = AmgLevel(current, smoother=_Smoother(current))
        levels.append(level)
        n_global = current.shape[0]
        if len(levels) >= params.max_levels or n_global <= params.coarse_size:
            break
        strong, flagged = strength_graph(current.local, current.nlocal, params.strength, params.max_row_sum)
        split = rs_coarsen(strong, flagged)
        nc_local = int(np.count_nonzero(split == C_POINT))
        nc_counts = ctx.allgather(nc_local)
        nc_global = sum(nc_counts)
        if nc_global == 0 or nc_global == n_global:
            break
        coarse_offsets = offsets_from_sizes(nc_counts)
        rows, cols, vals = direct_interpolation(current.local, current.nlocal, strong, split, flagged,
                                                params.trunc_tol, int(coarse_offsets[ctx.rank]))
        P = from_local_coo(rows + current.row_map.first, cols, vals, current.row_map, ctx, coarse_offsets)
        level.P = P
        level.splitting = split
        current = distributed_galerkin(current, P)

    hierarchy = AmgHierarchy(levels, params)
    coarsest = levels[-1].A
    if params.coarsest_solver == "direct" and coarsest.shape[0] > 0:
        dense = gather_global_csr(coarsest).toarray()
        hierarchy.coarse_lu = lu_factor(dense)
        hierarchy.coarse_first = coarsest.row_map.first
    sizes = [lvl.nglobal for lvl in levels]
    hierarchy.stats = {"levels": len(levels), "sizes": sizes,
                       "operator_complexity": hierarchy.operator_complexity()}
    if ctx.rank == 0:
        get_run_logger().log_setup("AMG", f"AMG {len(levels)} levels, sizes {sizes}, "
                                          f"complexity {hierarchy.stats['operator_complexity']:.2f}",
                                   hierarchy.stats)
    return hierarchy


def _coarsest_solve(hierarchy: AmgHierarchy, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    level = hierarchy.levels[-1]
    params = hierarchy.params
    if hierarchy.coarse_lu is None:
        return level.smoother.smooth(params.coarsest_smoother, b, x, params.sweeps)
    full_b = np.concatenate(level.A.ctx.allgather(b))
    full_x = dense_lu_solve(hierarchy.coarse_lu, full_b)
    first = hierarchy.coarse_first
    return full_x[first:first + level.A.nlocal].copy()


def _cycle(hierarchy: AmgHierarchy, l: int, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    if l == hierarchy.num_levels - 1:
        return _coarsest_solve(hierarchy, b, x)
    level = hierarchy.levels[l]
    params = hierarchy.params
    x = level.smoother.smooth(params.smoother, b, x, params.sweeps)
    r = b - level.A.local @ level.A.exchanged_columns(x)
    P = level.P.local
    b_coarse = P.T @ r
    x_coarse = _cycle(hierarchy, l + 1, b_coarse, np.zeros(P.shape[1]))
    x = x + P @ x_coarse
    return level.smoother.smooth(params.smoother, b, x, params.sweeps)


def amg_vcycle(hierarchy: AmgHierarchy, b: DistVector, x: DistVector) -> DistVector:
    """One V-cycle on A x = b starting from x"""
    A = hierarchy.levels[0].A
    out = _cycle(hierarchy, 0, np.asarray(b.owned, dtype=float), x.owned.copy())
    return DistVector(A.row_map, out, A.ctx)


def amg_solve(hierarchy: AmgHierarchy, b: DistVector) -> DistVector:
    """maxit V-cycles from a zero guess"""
    A = hierarchy.levels[0].A
    x = DistVector(A.row_map, None, A.ctx)
    for _ in range(hierarchy.params.maxit):
        x = amg_vcycle(hierarchy, b, x)
    return x


class AmgPreconditioner(Preconditioner):
    """Classical AMG as a preconditioner"""

    def __init__(self):
        super().__init__("amg", {f.name: f.default for f in fields(AmgParams)})
        self.hierarchy: Optional[AmgHierarchy] = None

    def assemble(self, A, params=None):
        self.matrix = A
        self.hierarchy = amg_setup(A, AmgParams.from_dict(self.get_params(params)))
        return self

    def solve(self, r):
        self._require_assembled()
        return amg_solve(self.hierarchy, r)

    def destroy(self):
        self.hierarchy = None
        super().destroy()
