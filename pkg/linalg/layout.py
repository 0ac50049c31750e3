"""
Block layout: placement of the unknowns of a cell among a rank's rows

interleaved: all unknowns of a cell are consecutive rows
segregated:  per rank, unknown 0 of every cell first, then unknown 1, ...
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from common.errors import InvalidLayoutError

ORDERINGS = ("interleaved", "segregated")


@dataclass(frozen=True)
class BlockLayout:
    unknowns_per_cell: int = 1
    pressure_unknown: Optional[int] = 0
    ordering: str = "interleaved"

    def __post_init__(self):
        if self.unknowns_per_cell < 1:
            raise InvalidLayoutError(f"unknowns_per_cell must be >= 1, got {self.unknowns_per_cell}")
        if self.ordering not in ORDERINGS:
            raise InvalidLayoutError(f"Unknown ordering: {self.ordering}")
        if self.pressure_unknown is not None and not 0 <= self.pressure_unknown < self.unknowns_per_cell:
            raise InvalidLayoutError(
                f"pressure unknown {self.pressure_unknown} outside [0, {self.unknowns_per_cell})")

    def row_offsets(self, cell_counts) -> np.ndarray:
        counts = np.asarray(cell_counts, dtype=np.int64) * self.unknowns_per_cell
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def local_row(self, cell_pos, unknown, ncells):
        if self.ordering == "interleaved":
            return np.asarray(cell_pos) * self.unknowns_per_cell + unknown
        return unknown * np.asarray(ncells) + np.asarray(cell_pos)

    def split_local_row(self, row, ncells) -> Tuple[np.ndarray, np.ndarray]:
        """(cell position, unknown) of local rows"""
        row = np.asarray(row, dtype=np.int64)
        if self.ordering == "interleaved":
            return row // self.unknowns_per_cell, row % self.unknowns_per_cell
        ncells = np.asarray(ncells, dtype=np.int64)
        return row % ncells, row // ncells

    def global_rows(self, partition, cells, unknown: int) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64)
        owner = partition.owner[cells]
        ncells = partition.sizes[owner]
        offsets = self.row_offsets(partition.sizes)[owner]
        return offsets + self.local_row(partition.position[cells], unknown, ncells)
