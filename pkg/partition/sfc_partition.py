"""
Space-filling-curve partitioning
Cells are ordered by the curve key of their centroid and cut into N_p runs;
the curve order is also the row order of the cells
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from common.errors import InvalidArgumentError, TooManyRanksError
from reporting.run_logger import get_run_logger
from sfc.hilbert import hilbert_encode_nd
from sfc.hilbert_table import hilbert_encode_3d_table
from sfc.keys import lattice_coords, normalize_to_unit_cube
from sfc.morton import morton_encode

ENCODERS: Dict[str, Callable] = {
    "hilbert_nd": hilbert_encode_nd,
    "hilbert_3d_table": hilbert_encode_3d_table,
    "morton": morton_encode,
}

# CLI method names
METHOD_ALIASES = {
    "hsfc": "hilbert_nd",
    "hsfc3d": "hilbert_3d_table",
    "msfc": "morton",
}


@dataclass(eq=False)
class Partition:
    """Owner rank of every global cell"""
    owner: np.ndarray
    nprocs: int
    cell_order: Optional[np.ndarray] = None  # row order of cells, global index order when None

    def __post_init__(self):
        self.owner = np.asarray(self.owner, dtype=np.int64)
        validate_partition(self)
        if self.cell_order is not None:
            self.cell_order = np.asarray(self.cell_order, dtype=np.int64)
            if not np.array_equal(np.sort(self.cell_order), np.arange(len(self.owner))):
                raise InvalidArgumentError("cell_order must be a permutation of the cells")

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.nprocs)

    @cached_property
    def cell_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @cached_property
    def row_to_cell(self) -> np.ndarray:
        """Cells in rank-contiguous order, cell_order inside a rank"""
        if self.cell_order is None:
            return np.argsort(self.owner, kind="stable")
        return self.cell_order[np.argsort(self.owner[self.cell_order], kind="stable")]

    @cached_property
    def position(self) -> np.ndarray:
        """Index of each cell within its owner's cell list"""
        pos = np.empty(len(self.owner), dtype=np.int64)
        order = self.row_to_cell
        pos[order] = np.arange(len(order)) - self.cell_offsets[self.owner[order]]
        return pos

    def cells_of(self, rank: int) -> np.ndarray:
        lo, hi = self.cell_offsets[rank], self.cell_offsets[rank + 1]
        return self.row_to_cell[lo:hi]


def validate_partition(partition: Partition) -> None:
    """Owned subsets are non-empty, disjoint and cover the grid"""
    owner = partition.owner
    if partition.nprocs < 1:
        raise InvalidArgumentError(f"nprocs must be >= 1, got {partition.nprocs}")
    if owner.ndim != 1 or len(owner) == 0:
        raise InvalidArgumentError("owner must be a non-empty 1D array")
    if owner.min() < 0 or owner.max() >= partition.nprocs:
        raise InvalidArgumentError(f"owner ranks must lie in [0, {partition.nprocs})")
    counts = np.bincount(owner, minlength=partition.nprocs)
    if np.any(counts == 0):
        empty = int(np.argmax(counts == 0))
        raise InvalidArgumentError(f"rank {empty} owns no cells")


def _check_nprocs(grid, nprocs: int) -> None:
    if nprocs < 1:
        raise InvalidArgumentError(f"nprocs must be >= 1, got {nprocs}")
    if nprocs > grid.ncells:
        raise TooManyRanksError(f"{nprocs} ranks for {grid.ncells} cells")


def split_sizes(total: int, nprocs: int) -> np.ndarray:
    """Run lengths differing by at most one, longer runs first"""
    base, extra = divmod(total, nprocs)
    return np.array([base + 1 if r < extra else base for r in range(nprocs)], dtype=np.int64)


def curve_level(grid) -> int:
    return max(1, math.ceil(math.log2(max(grid.spec.dims))))


def resolve_encoder(encoder: str) -> str:
    name = METHOD_ALIASES.get(encoder, encoder)
    if name not in ENCODERS:
        raise InvalidArgumentError(f"Unknown curve encoder: {encoder}")
    return name


def curve_keys(grid, cells: np.ndarray, encoder: str = "hilbert_nd") -> List[int]:
    """Integer curve keys of the given cells' centroids"""
    name = resolve_encoder(encoder)
    level = curve_level(grid)
    unit = normalize_to_unit_cube(grid.centroids[cells], grid.spec.bbox)
    coords = lattice_coords(unit, level)
    if name == "hilbert_3d_table":
        return [hilbert_encode_3d_table(c, level).value for c in coords]
    # axes with a single cell layer carry no ordering information
    active = [a for a, n in enumerate(grid.spec.dims) if n > 1]
    if len(active) == 0:
        return [0] * len(cells)
    if len(active) == 1:
        return [int(v) for v in coords[:, active[0]]]
    encode = ENCODERS[name]
    return [encode(c, level).value for c in coords[:, active]]


def _split(keys: List[int], cells: np.ndarray, nprocs: int,
           ncells: int) -> Tuple[np.ndarray, np.ndarray]:
    """Owner of every cell and the cells in curve order"""
    order = sorted(range(len(cells)), key=lambda n: (keys[n], int(cells[n])))
    curve = np.asarray(cells, dtype=np.int64)[order]
    owner = np.empty(ncells, dtype=np.int64)
    owner[curve] = np.repeat(np.arange(nprocs, dtype=np.int64), split_sizes(len(curve), nprocs))
    return owner, curve


def partition_sfc(grid, nprocs: int, encoder: str = "hilbert_nd", ctx=None) -> Partition:
    """Partition cells along a space-filling curve.

    With a rank context every rank encodes a strided share of the cells,
    rank 0 sorts and cuts the curve and broadcasts the owner array with
    the curve order.
    """
    _check_nprocs(grid, nprocs)
    name = resolve_encoder(encoder)
    if ctx is None or ctx.nprocs == 1:
        cells = np.arange(grid.ncells, dtype=np.int64)
        owner, curve = _split(curve_keys(grid, cells, name), cells, nprocs, grid.ncells)
    else:
        mine = np.arange(ctx.rank, grid.ncells, ctx.nprocs, dtype=np.int64)
        gathered = ctx.allgather((mine, curve_keys(grid, mine, name)))
        split = None
        if ctx.rank == 0:
            cells = np.concatenate([c for c, _ in gathered])
            keys = [k for _, ks in gathered for k in ks]
            split = _split(keys, cells, nprocs, grid.ncells)
        owner, curve = ctx.broadcast(split, root=0)
    # rows follow the curve, so global numbering does not depend on nprocs
    partition = Partition(owner, nprocs, curve)
    if ctx is None or ctx.rank == 0:
        get_run_logger().log_partition(name, nprocs, partition.sizes.tolist())
    return partition


def partition_block(grid, nprocs: int) -> Partition:
    """Contiguous global-index slabs of near-equal size"""
    _check_nprocs(grid, nprocs)
    owner = np.repeat(np.arange(nprocs, dtype=np.int64), split_sizes(grid.ncells, nprocs))
    return Partition(owner, nprocs)


def partition_grid(grid, nprocs: int, method: str = "hsfc", ctx=None) -> Partition:
    """Dispatch on a method name: block or any curve encoder"""
    if method == "block":
        return partition_block(grid, nprocs)
    return partition_sfc(grid, nprocs, method, ctx)
