"""
Restricted additive Schwarz
Each rank factors its rows plus `overlap` layers of neighbor rows and
writes back only the entries it owns.
"""

from dataclasses import dataclass, fields
from typing import Any, Dict, Optional

import numpy as np
import scipy.sparse as sp

from common.errors import InvalidArgumentError, SingularPivotError
from linalg.matrix import DistMatrix, fetch_rows
from linalg.vector import DistVector
from precond.base import Preconditioner
from precond.ilu import IluFactors, ilu0_factor, iluk_factor, ilut_factor, lu_solve
from reporting.run_logger import get_run_logger
from runtime.index_map import IndexMap, build_comm_plan, exchange

LOCAL_SOLVERS = ("ilu0", "iluk", "ilut")


@dataclass
class RasParams:
    overlap: int = 1
    solver: str = "iluk"
    iluk_level: int = 0
    ilut_p: int = -1
    ilut_tol: float = 1e-3
    filter_tol: float = 1e-4
    ilutc_drop: float = 0.0

    def __post_init__(self):
        if self.overlap < 0:
            raise InvalidArgumentError(f"overlap must be >= 0, got {self.overlap}")
        if self.solver not in LOCAL_SOLVERS:
            raise InvalidArgumentError(f"Unknown local solver: {self.solver}")
        if self.filter_tol < 0:
            raise InvalidArgumentError(f"filter_tol must be >= 0, got {self.filter_tol}")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "RasParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (data or {}).items() if k in names})


@dataclass(eq=False)
class RasData:
    params: RasParams
    ext_map: IndexMap  # owned rows + overlap rows
    plan: Any
    submatrix: sp.csr_matrix
    factors: IluFactors

    @property
    def nowned(self) -> int:
        return self.ext_map.nlocal


def _filter(matrix: sp.csr_matrix, filter_tol: float) -> sp.csr_matrix:
    """Drop off-diagonals with |a_ij| < filter_tol * |a_ii|"""
    if filter_tol == 0.0:
        return matrix
    coo = matrix.tocoo()
    diag = np.abs(matrix.diagonal())
    keep = (coo.row == coo.col) | (np.abs(coo.data) >= filter_tol * diag[coo.row])
    return sp.csr_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=matrix.shape)


def _factor(matrix: sp.csr_matrix, params: RasParams) -> IluFactors:
    if params.solver == "ilu0":
        return ilu0_factor(matrix)
    if params.solver == "iluk":
        return iluk_factor(matrix, params.iluk_level)
    return ilut_factor(matrix, params.ilut_p, params.ilut_tol)


def ras_setup(A: DistMatrix, params: Optional[RasParams] = None) -> RasData:
    """Collective: gather the overlapped rows, filter and factor them"""
    params = params or RasParams()
    ctx = A.ctx
    if params.ilutc_drop and ctx.rank == 0:
        get_run_logger().log_warning("RAS", f"ilutc_drop={params.ilutc_drop} has no effect and is ignored")

    first, nlocal = A.row_map.first, A.nlocal
    rows, gcols, vals = A.local_coo()
    known = {}  # overlap row -> (gcols, values)
    frontier = np.unique(gcols[(gcols < first) | (gcols >= first + nlocal)])
    for _ in range(params.overlap):
        fetched = fetch_rows(A, frontier)
        known.update(fetched)
        if not fetched:
            new = np.empty(0, dtype=np.int64)
        else:
            cols = np.unique(np.concatenate([c for c, _ in fetched.values()]))
            inside = (cols >= first) & (cols < first + nlocal)
            new = cols[~inside & ~np.isin(cols, np.fromiter(known.keys(), dtype=np.int64))]
        frontier = new
    ext_map = A.row_map.with_halo(np.fromiter(known.keys(), dtype=np.int64))

    # submatrix over the extended index set; couplings leaving it are dropped
    sub_rows = [rows - first]
    sub_cols = [gcols]
    sub_vals = [vals]
    for slot, g in enumerate(ext_map.halo.tolist(), start=nlocal):
        c, v = known[g]
        sub_rows.append(np.full(len(c), slot))
        sub_cols.append(c)
        sub_vals.append(v)
    r = np.concatenate(sub_rows)
    c = np.concatenate(sub_cols)
    v = np.concatenate(sub_vals)
    lo_owned = (c >= first) & (c < first + nlocal)
    inside = lo_owned | np.isin(c, ext_map.halo)
    local_cols = ext_map.global_to_local(c[inside])
    n = ext_map.ntlocal
    sub = sp.csr_matrix((v[inside], (r[inside], local_cols)), shape=(n, n))
    sub = _filter(sub, params.filter_tol)
    try:
        factors = _factor(sub, params)
    except SingularPivotError as exc:
        raise SingularPivotError(exc.row, f"rank {ctx.rank}: {exc}") from exc
    plan = build_comm_plan(ext_map, ctx)
    if ctx.rank == 0:
        get_run_logger().log_setup("RAS", f"RAS overlap {params.overlap}, {params.solver}, "
                                          f"{n} extended rows on rank 0",
                                   {"overlap": params.overlap, "rows": n, "owned": nlocal})
    return RasData(params, ext_map, plan, sub, factors)


def ras_apply(data: RasData, r: DistVector) -> DistVector:
    """Solve on the overlapped block and keep the owned entries"""
    buf = np.zeros(data.ext_map.ntlocal)
    buf[:data.nowned] = r.owned
    exchange(data.plan, buf, r.ctx)
    z = lu_solve(data.factors, buf)
    return DistVector(r.map.owned_map(), z[:data.nowned].copy(), r.ctx)


class RasPreconditioner(Preconditioner):
    """Restricted additive Schwarz with a local ILU solver"""

    def __init__(self):
        super().__init__("ras", {f.name: f.default for f in fields(RasParams)})
        self.data: Optional[RasData] = None

    def assemble(self, A, params=None):
        self.matrix = A
        self.data = ras_setup(A, RasParams.from_dict(self.get_params(params)))
        return self

    def solve(self, r):
        self._require_assembled()
        return ras_apply(self.data, r)

    def destroy(self):
        self.data = None
        super().destroy()
