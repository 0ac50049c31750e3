"""
CPR-type multi-stage preconditioners
F stages run RAS on the full system, P stages run AMG on the pressure block.
The variants differ only in their stage sequence:

    fp    F then P
    pf    P then F
    fpf   F, P, F
    ffpf  F, F, P, F

Every stage but the first works on the fresh residual f - A x.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
import scipy.sparse as sp

from common.errors import InvalidArgumentError, InvalidKindError, InvalidLayoutError
from linalg.layout import BlockLayout
from linalg.matrix import DistMatrix, from_local_coo
from linalg.vector import DistVector
from precond.amg import AmgPreconditioner
from precond.base import Preconditioner
from precond.ras import RasPreconditioner
from reporting.run_logger import get_run_logger
from runtime.index_map import IndexMap, offsets_from_sizes

STAGES = {
    "fp": "FP",
    "pf": "PF",
    "fpf": "FPF",
    "ffpf": "FFPF",
}

# pressure stage AMG, applied under any amg params the caller passes
PRESSURE_AMG = {"maxit": 2, "smoother": "gs-h-symmetric"}


@dataclass
class CprParams:
    variant: str = "fpf"
    decouple: bool = False  # block-diagonal scaling, off unless asked for
    ras: Optional[Dict[str, Any]] = None
    amg: Optional[Dict[str, Any]] = None

    def __post_init__(self):
        self.variant = self.variant.lower()
        if self.variant not in STAGES:
            raise InvalidKindError(f"Unknown CPR variant: {self.variant}")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "CprParams":
        data = data or {}
        return cls(
            variant=data.get("variant", "fpf"),
            decouple=bool(data.get("decouple", False)),
            ras=data.get("ras"),
            amg=data.get("amg"),
        )


@dataclass(eq=False)
class CprData:
    variant: str
    layout: BlockLayout
    A: DistMatrix  # matrix the stages run on (scaled when decoupled)
    A_pp: DistMatrix
    pressure_rows: np.ndarray  # owned rows holding the pressure unknown
    full_solver: Preconditioner
    pressure_solver: Preconditioner
    scaling: Optional[sp.csr_matrix] = None  # block-diagonal inverse, owned rows

    @property
    def stages(self) -> str:
        return STAGES[self.variant]


def pressure_index(A: DistMatrix, layout: BlockLayout, pressure_offsets: np.ndarray,
                   gidx) -> np.ndarray:
    """Global pressure index of global rows, -1 for other unknowns"""
    g = np.asarray(gidx, dtype=np.int64)
    offsets = A.row_map.offsets
    owner = A.row_map.owner_of(g)
    ncells = (offsets[owner + 1] - offsets[owner]) // layout.unknowns_per_cell
    out = np.full(len(g), -1, dtype=np.int64)
    if len(g) == 0:
        return out
    cell, unknown = layout.split_local_row(g - offsets[owner], np.maximum(ncells, 1))
    hit = unknown == layout.pressure_unknown
    out[hit] = pressure_offsets[owner[hit]] + cell[hit]
    return out


def extract_pressure_block(A: DistMatrix, layout: BlockLayout):
    """Collective: A_pp over the pressure rows and columns; returns (A_pp, local pressure rows)"""
    if layout.pressure_unknown is None:
        raise InvalidLayoutError("layout declares no pressure unknown")
    u = layout.unknowns_per_cell
    if A.nlocal % u:
        raise InvalidLayoutError(f"{A.nlocal} owned rows are not a multiple of {u} unknowns per cell")
    ncells = A.nlocal // u
    rows_local = np.asarray(layout.local_row(np.arange(ncells), layout.pressure_unknown, ncells),
                            dtype=np.int64)
    pressure_offsets = offsets_from_sizes(A.ctx.allgather(ncells))
    rows, cols, vals = A.local_coo()
    prow = pressure_index(A, layout, pressure_offsets, rows)
    pcol = pressure_index(A, layout, pressure_offsets, cols)
    keep = (prow >= 0) & (pcol >= 0)
    pmap = IndexMap(A.row_map.rank, pressure_offsets)
    A_pp = from_local_coo(prow[keep], pcol[keep], vals[keep], pmap, A.ctx)
    return A_pp, rows_local


def block_diagonal_scaling(A: DistMatrix, layout: BlockLayout) -> sp.csr_matrix:
    """Inverse of the per-cell diagonal blocks of the owned rows"""
    u = layout.unknowns_per_cell
    ncells = A.nlocal // u
    own = A.local[:, :A.nlocal].tocoo()
    rcell, runk = layout.split_local_row(own.row, max(ncells, 1))
    ccell, cunk = layout.split_local_row(own.col, max(ncells, 1))
    same = rcell == ccell
    blocks = np.zeros((ncells, u, u))
    np.add.at(blocks, (rcell[same], runk[same], cunk[same]), own.data[same])
    inv = np.linalg.inv(blocks) if ncells else blocks
    cells = np.repeat(np.arange(ncells), u * u)
    ii = np.tile(np.repeat(np.arange(u), u), ncells)
    jj = np.tile(np.tile(np.arange(u), u), ncells)
    r = layout.local_row(cells, ii, ncells)
    c = layout.local_row(cells, jj, ncells)
    return sp.csr_matrix((inv.ravel(), (r, c)), shape=(A.nlocal, A.nlocal))


def _scaled_matrix(A: DistMatrix, scaling: sp.csr_matrix) -> DistMatrix:
    scaled = (scaling @ A.local).tocoo()
    return from_local_coo(A.row_map.first + scaled.row, A.col_map.l2g[scaled.col], scaled.data,
                          A.row_map, A.ctx, A.col_offsets)


def cpr_setup(A: DistMatrix, layout: BlockLayout, variant: str = "fpf",
              params: Optional[CprParams] = None,
              full_solver: Optional[Preconditioner] = None,
              pressure_solver: Optional[Preconditioner] = None) -> CprData:
    """Collective: pressure block, AMG on it, RAS on the full system.

    full_solver / pressure_solver replace the default RAS and AMG stages;
    they are assembled here on A and A_pp.
    """
    params = params or CprParams(variant=variant)
    variant = variant.lower()
    if variant not in STAGES:
        raise InvalidKindError(f"Unknown CPR variant: {variant}")
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"CPR needs a square matrix, got {A.shape}")

    scaling = None
    work = A
    if params.decouple:
        if layout.pressure_unknown is None:
            raise InvalidLayoutError("layout declares no pressure unknown")
        scaling = block_diagonal_scaling(A, layout)
        work = _scaled_matrix(A, scaling)
    A_pp, prows = extract_pressure_block(work, layout)

    full = full_solver if full_solver is not None else RasPreconditioner()
    full.assemble(work, params.ras)
    if pressure_solver is None:
        press = AmgPreconditioner().assemble(A_pp, {**PRESSURE_AMG, **(params.amg or {})})
    else:
        press = pressure_solver
        press.assemble(A_pp, params.amg)

    if A.ctx.rank == 0:
        get_run_logger().log_setup("CPR", f"CPR-{variant.upper()}: {A.shape[0]} unknowns, "
                                          f"pressure block {A_pp.shape[0]}",
                                   {"variant": variant, "n": A.shape[0], "n_pressure": A_pp.shape[0],
                                    "decouple": params.decouple})
    return CprData(variant, layout, work, A_pp, prows, full, press, scaling)


def restrict_pressure(data: CprData, r: DistVector) -> DistVector:
    """Pressure entries of a full-system vector"""
    return DistVector(data.A_pp.row_map, r.owned[data.pressure_rows].copy(), data.A_pp.ctx)


def prolong_pressure(data: CprData, p: DistVector) -> DistVector:
    """Full-system vector with p in the pressure rows and zeros elsewhere"""
    out = DistVector(data.A.row_map, None, data.A.ctx)
    out.owned[data.pressure_rows] = p.owned
    return out


def cpr_apply(data: CprData, f: DistVector) -> DistVector:
    """Run the variant's stages from x = 0"""
    A = data.A
    rhs = f.owned if data.scaling is None else data.scaling @ f.owned
    rhs = DistVector(A.row_map, np.array(rhs, dtype=float), A.ctx)
    x = DistVector(A.row_map, None, A.ctx)
    for step, stage in enumerate(data.stages):
        if step == 0:
            r = rhs
        else:
            r = DistVector(A.row_map, rhs.owned - A.local @ A.exchanged_columns(x.owned), A.ctx)
        if stage == "F":
            x.owned = x.owned + data.full_solver.solve(r).owned
        else:
            z = data.pressure_solver.solve(restrict_pressure(data, r))
            x.owned[data.pressure_rows] += z.owned
    return x


class CprPreconditioner(Preconditioner):
    """CPR variant behind the common preconditioner interface"""

    def __init__(self, variant: str = "fpf", layout: Optional[BlockLayout] = None,
                 full_solver: Optional[Preconditioner] = None,
                 pressure_solver: Optional[Preconditioner] = None):
        variant = variant.lower()
        if variant not in STAGES:
            raise InvalidKindError(f"Unknown CPR variant: {variant}")
        super().__init__(f"cpr_{variant}", {"decouple": False, "ras": None, "amg": None})
        self.variant = variant
        self.layout = layout
        self.full_solver = full_solver
        self.pressure_solver = pressure_solver
        self.data: Optional[CprData] = None

    def assemble(self, A, params=None):
        merged = self.get_params(params)
        layout = merged.pop("layout", None) or self.layout or BlockLayout()
        merged["variant"] = self.variant
        self.matrix = A
        self.data = cpr_setup(A, layout, self.variant, CprParams.from_dict(merged),
                              self.full_solver, self.pressure_solver)
        return self

    def solve(self, r):
        self._require_assembled()
        return cpr_apply(self.data, r)

    def destroy(self):
        if self.data is not None:
            self.data.full_solver.destroy()
            self.data.pressure_solver.destroy()
        self.data = None
        super().destroy()
