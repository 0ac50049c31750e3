"""
Rank-local view of a partitioned grid
Owned cells come first in the partition row order, remote neighbor cells
follow in the order of the halo rows of the cell index map.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional

from common.errors import InvalidArgumentError, InvalidCoordinateError
from grid.structured import CLOSED, Cell, FaceLink, StructuredGrid
from runtime.index_map import CommPlan, IndexMap, build_comm_plan, build_index_map
from runtime.ranks import serial_context


@dataclass(frozen=True)
class RemoteNeighbor:
    """A neighbor cell owned by another rank"""
    global_index: int
    owner_rank: int
    owner_local_index: int


class LocalGrid:
    """Cells owned by one rank plus the remote cells across its boundary"""

    def __init__(self, grid: StructuredGrid, partition, rank: int, ctx=None,
                 plan: Optional[CommPlan] = None):
        if partition.nprocs <= rank or rank < 0:
            raise InvalidArgumentError(f"rank {rank} outside [0, {partition.nprocs})")
        self.grid = grid
        self.partition = partition
        self.rank = rank
        self.ctx = ctx
        self.cells = partition.cells_of(rank)
        self.cell_map: IndexMap = build_index_map(grid, partition, rank, 1)
        self.halo_cells = partition.row_to_cell[self.cell_map.halo]
        self.plan = plan

    @property
    def spec(self):
        return self.grid.spec

    @property
    def nowned(self) -> int:
        return len(self.cells)

    @property
    def nhalo(self) -> int:
        return len(self.halo_cells)

    @cached_property
    def remote(self) -> List[RemoteNeighbor]:
        owners = self.partition.owner[self.halo_cells]
        pos = self.partition.position[self.halo_cells]
        return [RemoteNeighbor(int(g), int(o), int(p))
                for g, o, p in zip(self.halo_cells, owners, pos)]

    @cached_property
    def _slot_of(self) -> Dict[int, int]:
        slots = {int(g): n for n, g in enumerate(self.cells)}
        slots.update({int(g): self.nowned + n for n, g in enumerate(self.halo_cells)})
        return slots

    def local_index(self, global_index: int) -> int:
        """Local slot of an owned or remote-neighbor cell"""
        slot = self._slot_of.get(int(global_index))
        if slot is None:
            raise InvalidCoordinateError(f"cell {global_index} is not known to rank {self.rank}")
        return slot

    def global_index(self, local_index: int) -> int:
        if 0 <= local_index < self.nowned:
            return int(self.cells[local_index])
        if self.nowned <= local_index < self.nowned + self.nhalo:
            return int(self.halo_cells[local_index - self.nowned])
        raise InvalidCoordinateError(f"local index {local_index} outside [0, {self.nowned + self.nhalo})")

    def cell(self, local_index: int) -> Cell:
        return self.grid.cell(self.global_index(local_index), local_index)

    def local_neighbors(self, local_index: int) -> List[FaceLink]:
        """Face links of an owned cell: local slot, remote neighbor or boundary"""
        if not 0 <= local_index < self.nowned:
            raise InvalidCoordinateError(f"cell {local_index} is not owned by rank {self.rank}")
        links = []
        for f, other in enumerate(self.grid.neighbors[self.cells[local_index]]):
            other = int(other)
            if other < 0:
                links.append(FaceLink(f, "boundary", -1, boundary_tag=CLOSED))
            elif self.partition.owner[other] == self.rank:
                links.append(FaceLink(f, "local", self.local_index(other)))
            else:
                slot = self.local_index(other) - self.nowned
                links.append(FaceLink(f, "remote", other, remote=self.remote[slot]))
        return links


def distribute(grid: StructuredGrid, partition, ctx=None) -> LocalGrid:
    """Collective: local grid of ctx.rank with its halo plan built"""
    ctx = ctx if ctx is not None else serial_context()
    if partition.nprocs != ctx.nprocs:
        raise InvalidArgumentError(f"partition for {partition.nprocs} ranks used on {ctx.nprocs}")
    local = LocalGrid(grid, partition, ctx.rank, ctx)
    local.plan = build_comm_plan(local.cell_map, ctx)
    return local
