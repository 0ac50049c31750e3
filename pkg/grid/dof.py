"""
Cell-centered degrees of freedom on a rank-local grid
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from common.errors import InvalidArgumentError, NotAssembledError
from grid.local import LocalGrid
from grid.structured import export_cell_field_csv
from runtime.index_map import exchange

DOF_KINDS = ("cell", "constant")


@dataclass(eq=False)
class DofField:
    name: str
    kind: str
    dim: int
    values: np.ndarray  # (owned cells, dim)
    halo: np.ndarray  # (remote neighbors, dim), valid after dof_halo_exchange
    grid: LocalGrid

    def component(self, c: int) -> np.ndarray:
        return self.values[:, c]


def dof_create(grid: LocalGrid, name: str, kind: str = "cell", dim: int = 1,
               value: float = 0.0, dtype=float) -> DofField:
    if kind not in DOF_KINDS:
        raise InvalidArgumentError(f"Unknown DOF kind: {kind}")
    if dim < 1:
        raise InvalidArgumentError(f"dim must be >= 1, got {dim}")
    values = np.full((grid.nowned, dim), value, dtype=dtype)
    halo = np.zeros((grid.nhalo, dim), dtype=dtype)
    return DofField(name, kind, dim, values, halo, grid)


def dof_halo_exchange(field: DofField) -> np.ndarray:
    """Collective: copy the owners' current values into field.halo"""
    grid = field.grid
    if grid.plan is None:
        raise NotAssembledError(f"DOF {field.name}: halo exchange before the grid plan is built")
    buf = np.concatenate([field.values, np.zeros_like(field.halo)], axis=0)
    exchange(grid.plan, buf, grid.ctx)
    field.halo[:] = buf[grid.nowned:]
    return field.halo


def dof_export_csv(field: DofField, path: str, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Owned values with global index and centroid columns"""
    names = names or ([field.name] if field.dim == 1 else [f"{field.name}_{c}" for c in range(field.dim)])
    return export_cell_field_csv(field.grid.grid, field.grid.cells, field.values, path, names)
