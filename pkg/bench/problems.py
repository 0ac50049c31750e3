"""
Test problem generators
Cell-centered finite-volume diffusion on a rank-local grid with
two-point flux transmissibilities. Boundary faces are Dirichlet
(value 0) and eliminated, so every right-hand side is b = A * 1 and
the exact solution is the vector of ones.
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from common.errors import InvalidArgumentError
from grid.local import LocalGrid
from linalg.layout import BlockLayout
from linalg.matrix import DistMatrix, spmv
from linalg.vector import DistVector
from runtime.index_map import build_index_map

PROBLEM_KINDS = ("poisson3d", "hetero_pressure", "coupled2")

# CLI problem names
PROBLEM_ALIASES = {
    "poisson": "poisson3d",
    "hetero": "hetero_pressure",
    "coupled": "coupled2",
}

SATURATION_DIAG = 1.0
SATURATION_LINK = 0.05


@dataclass
class ProblemSpec:
    """Which system to generate and on what grid"""
    kind: str = "poisson3d"
    nx: int = 10
    ny: int = 10
    nz: int = 10
    contrast: float = 1.0
    seed: int = 0
    coupling: float = 0.1
    ordering: str = "interleaved"

    def __post_init__(self):
        self.kind = PROBLEM_ALIASES.get(self.kind, self.kind)
        if self.kind not in PROBLEM_KINDS:
            raise InvalidArgumentError(f"Unknown problem: {self.kind}")
        if min(self.nx, self.ny, self.nz) < 1:
            raise InvalidArgumentError(f"grid dims must be >= 1, got {self.dims}")
        if self.contrast < 1.0:
            raise InvalidArgumentError(f"contrast must be >= 1, got {self.contrast}")
        if self.coupling < 0.0:
            raise InvalidArgumentError(f"coupling must be >= 0, got {self.coupling}")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.nx, self.ny, self.nz

    @property
    def unknowns_per_cell(self) -> int:
        return 2 if self.kind == "coupled2" else 1

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "ProblemSpec":
        data = dict(data or {})
        if "dims" in data:
            data["nx"], data["ny"], data["nz"] = data.pop("dims")
        names = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in names})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def permeability_field(ncells: int, contrast: float, seed: int) -> np.ndarray:
    """Log-normal cell permeabilities exp(sigma z), sigma = ln(contrast) / 2.

    Drawn for the whole grid so every rank sees the same field.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(ncells)
    sigma = np.log(contrast) / 2.0
    return np.exp(sigma * z)


def diffusion_entries(lgrid: LocalGrid, perm: np.ndarray):
    """Local (cell, neighbor cell or -1, transmissibility) triples of the owned cells.

    Faces to other cells give T = area / (d1/k1 + d2/k2) with d the
    centroid-to-face distances; boundary faces give T = area * k / (h / 2).
    """
    grid = lgrid.grid
    cells = lgrid.cells
    h = grid.spacings
    areas = grid.face_areas[cells]
    nbr = grid.neighbors[cells]
    src, dst, trans = [], [], []
    for f in range(6):
        axis = f // 2
        other = nbr[:, f]
        inside = other >= 0
        d1 = 0.5 * h[cells, axis]
        k1 = perm[cells]
        t = np.empty(len(cells))
        t[~inside] = areas[~inside, f] * k1[~inside] / d1[~inside]
        o = other[inside]
        t[inside] = areas[inside, f] / (d1[inside] / k1[inside] + 0.5 * h[o, axis] / perm[o])
        src.append(cells)
        dst.append(other)
        trans.append(t)
    return np.concatenate(src), np.concatenate(dst), np.concatenate(trans)


def cell_rows(partition, cells, layout: Optional[BlockLayout] = None, unknown: int = 0) -> np.ndarray:
    """Global matrix rows of cells under a layout"""
    layout = layout or BlockLayout(1, 0)
    return layout.global_rows(partition, cells, unknown)


def _new_matrix(lgrid: LocalGrid, layout: BlockLayout) -> DistMatrix:
    row_map = build_index_map(lgrid.grid, lgrid.partition, lgrid.rank, layout)
    return DistMatrix(row_map, lgrid.ctx)


def _finish(A: DistMatrix, assemble: bool) -> Tuple[DistMatrix, Optional[DistVector]]:
    if not assemble:
        return A, None
    A.assemble()
    ones = A.column_vector(np.ones(A.nlocal))
    b = spmv(1.0, A, ones, 0.0, A.create_vector())
    return A, b


def build_pressure_matrix(lgrid: LocalGrid, perm: np.ndarray,
                          layout: Optional[BlockLayout] = None) -> DistMatrix:
    """Unassembled diffusion operator (unknown layout.pressure_unknown of every cell)"""
    layout = layout or BlockLayout(1, 0)
    A = _new_matrix(lgrid, layout)
    part = lgrid.partition
    p = layout.pressure_unknown
    src, dst, t = diffusion_entries(lgrid, perm)
    rows = cell_rows(part, src, layout, p)
    A.add_entries(rows, rows, t)
    inside = dst >= 0
    A.add_entries(rows[inside], cell_rows(part, dst[inside], layout, p), -t[inside])
    return A


def gen_poisson3d(lgrid: LocalGrid, assemble: bool = True):
    """7-point finite-volume Laplacian (unit permeability)"""
    A = build_pressure_matrix(lgrid, np.ones(lgrid.grid.ncells))
    return _finish(A, assemble)


def gen_hetero_pressure(lgrid: LocalGrid, contrast: float, seed: int = 0, assemble: bool = True):
    """Diffusion with a seeded log-normal permeability field; SPD"""
    if contrast < 1.0:
        raise InvalidArgumentError(f"contrast must be >= 1, got {contrast}")
    perm = permeability_field(lgrid.grid.ncells, contrast, seed)
    A = build_pressure_matrix(lgrid, perm)
    return _finish(A, assemble)


def gen_coupled2(lgrid: LocalGrid, contrast: float, seed: int = 0, coupling: float = 0.1,
                 ordering: str = "interleaved", assemble: bool = True):
    """Two unknowns per cell: pressure (unknown 0) and a saturation-like unknown.

    A_pp is the heterogeneous diffusion operator, A_ss a diagonally dominant
    mass-like block, and the in-cell couplings A_ps / A_sp are at most
    `coupling` times the matching diagonal.
    """
    if contrast < 1.0:
        raise InvalidArgumentError(f"contrast must be >= 1, got {contrast}")
    layout = BlockLayout(2, 0, ordering)
    grid = lgrid.grid
    part = lgrid.partition
    perm = permeability_field(grid.ncells, contrast, seed)
    weights = np.random.default_rng(seed + 1).uniform(size=(grid.ncells, 2))

    A = build_pressure_matrix(lgrid, perm, layout)
    cells = lgrid.cells
    s_rows = cell_rows(part, cells, layout, 1)
    nbr = grid.neighbors[cells]
    degree = np.count_nonzero(nbr >= 0, axis=1)
    s_diag = SATURATION_DIAG + SATURATION_LINK * degree
    A.add_entries(s_rows, s_rows, s_diag)
    for f in range(6):
        inside = nbr[:, f] >= 0
        A.add_entries(s_rows[inside], cell_rows(part, nbr[inside, f], layout, 1),
                      np.full(int(inside.sum()), -SATURATION_LINK))

    if coupling > 0.0:
        p_rows = cell_rows(part, cells, layout, 0)
        _, _, t = diffusion_entries(lgrid, perm)
        p_diag = t.reshape(6, len(cells)).sum(axis=0)
        A.add_entries(p_rows, s_rows, coupling * weights[cells, 0] * p_diag)
        A.add_entries(s_rows, p_rows, coupling * weights[cells, 1] * s_diag)
    A, b = _finish(A, assemble)
    return A, b, layout


def build_problem(spec: ProblemSpec, lgrid: LocalGrid, assemble: bool = True):
    """(A, b, layout) for a problem spec"""
    if spec.kind == "poisson3d":
        A, b = gen_poisson3d(lgrid, assemble)
        return A, b, BlockLayout(1, 0)
    if spec.kind == "hetero_pressure":
        A, b = gen_hetero_pressure(lgrid, spec.contrast, spec.seed, assemble)
        return A, b, BlockLayout(1, 0)
    return gen_coupled2(lgrid, spec.contrast, spec.seed, spec.coupling, spec.ordering, assemble)


def finish_problem(A: DistMatrix) -> DistVector:
    """Assemble a generated matrix and return b = A * 1"""
    return _finish(A, True)[1]
