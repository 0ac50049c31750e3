"""
Structured hexahedral grid
Cell indexing, neighbor topology and lazily computed geometry
"""

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml

from common.errors import InvalidArgumentError, InvalidCoordinateError

# Face order: -x, +x, -y, +y, -z, +z
FACE_OFFSETS = ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))
INTERIOR = 0
CLOSED = 1

NUMBERINGS = ("bottom_up", "top_down")


@dataclass
class GridSpec:
    """Grid dimensions, domain and optional non-uniform axis partitions"""
    ncx: int
    ncy: int
    ncz: int
    bbox: Tuple[Tuple[float, float], ...] = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    vx: Optional[Sequence[float]] = None
    vy: Optional[Sequence[float]] = None
    vz: Optional[Sequence[float]] = None
    numbering: str = "bottom_up"
    uniform: bool = field(init=False, default=True)

    def __post_init__(self):
        for name, n in (("ncx", self.ncx), ("ncy", self.ncy), ("ncz", self.ncz)):
            if int(n) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1, got {n}")
        self.ncx, self.ncy, self.ncz = int(self.ncx), int(self.ncy), int(self.ncz)
        if self.numbering not in NUMBERINGS:
            raise InvalidArgumentError(f"Unknown numbering: {self.numbering}")
        box = [tuple(float(v) for v in axis) for axis in self.bbox]
        if len(box) != 3 or any(len(axis) != 2 for axis in box):
            raise InvalidArgumentError(f"bbox must be 3 pairs, got {self.bbox}")

        axes = []
        for a, (name, n, given) in enumerate((("vx", self.ncx, self.vx), ("vy", self.ncy, self.vy),
                                              ("vz", self.ncz, self.vz))):
            if given is None:
                lo, hi = box[a]
                if hi <= lo:
                    raise InvalidArgumentError(f"bbox axis {a} must be increasing, got {box[a]}")
                axes.append(np.linspace(lo, hi, n + 1))
                continue
            v = np.asarray(given, dtype=float)
            if v.shape != (n + 1,):
                raise InvalidArgumentError(f"{name} needs {n + 1} entries, got {v.shape[0]}")
            if np.any(np.diff(v) <= 0):
                raise InvalidArgumentError(f"{name} must be strictly increasing")
            axes.append(v)
            box[a] = (float(v[0]), float(v[-1]))
        self.vx, self.vy, self.vz = axes
        self.bbox = tuple(box)
        self.uniform = all(np.allclose(np.diff(v), (v[-1] - v[0]) / (len(v) - 1)) for v in axes)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.ncx, self.ncy, self.ncz

    @property
    def ncells(self) -> int:
        return self.ncx * self.ncy * self.ncz

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridSpec":
        dims = data.get("dims")
        if dims is not None:
            ncx, ncy, ncz = dims
        else:
            ncx, ncy, ncz = data.get("ncx", 1), data.get("ncy", 1), data.get("ncz", 1)
        return cls(
            ncx=ncx, ncy=ncy, ncz=ncz,
            bbox=tuple(tuple(axis) for axis in data.get("bbox", ((0.0, 1.0),) * 3)),
            vx=data.get("vx"), vy=data.get("vy"), vz=data.get("vz"),
            numbering=data.get("numbering", "bottom_up"),
        )


def load_grid_spec(path: str) -> GridSpec:
    """Read a grid spec from a JSON or YAML file"""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Grid spec not found: {path}")
    with open(p, "r") as f:
        if p.suffix.lower() == ".json":
            data = json.load(f)
        else:
            data = yaml.safe_load(f)
    return GridSpec.from_dict(data.get("grid", data))


def _check_ijk(ijk: Sequence[int], spec: GridSpec) -> Tuple[int, int, int]:
    i, j, k = (int(v) for v in ijk)
    if not (0 <= i < spec.ncx and 0 <= j < spec.ncy and 0 <= k < spec.ncz):
        raise InvalidCoordinateError(f"cell {(i, j, k)} outside grid {spec.dims}")
    return i, j, k


def cell_index_bottom_up(ijk: Sequence[int], spec: GridSpec) -> int:
    i, j, k = _check_ijk(ijk, spec)
    return spec.ncx * spec.ncy * k + spec.ncx * j + i


def cell_index_top_down(ijk: Sequence[int], spec: GridSpec) -> int:
    """Top-down formula; values lie in [nx*ny, N_g + nx*ny)"""
    i, j, k = _check_ijk(ijk, spec)
    return spec.ncx * spec.ncy * (spec.ncz - k) + spec.ncx * j + i


@dataclass
class Cell:
    """Read-only view of one grid cell"""
    ijk: Tuple[int, int, int]
    global_index: int
    local_index: int
    region: int
    boundary_type: Tuple[int, ...]
    centroid: Tuple[float, float, float]
    face_areas: Tuple[float, ...]
    volume: float


@dataclass
class FaceLink:
    """What lies across one face of a cell"""
    face: int
    kind: str  # "local", "remote", "boundary"
    index: int  # local cell index, global index of a remote cell, or -1
    remote: Optional[Any] = None
    boundary_tag: int = INTERIOR


class StructuredGrid:
    """All cells of a structured grid, stored by global index"""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        nx, ny, nz = spec.dims
        self.ncells = spec.ncells
        # position p in bottom-up order -> (i, j, k)
        p = np.arange(self.ncells, dtype=np.int64)
        i, j, k = p % nx, (p // nx) % ny, p // (nx * ny)
        if spec.numbering == "bottom_up":
            gidx = p
        else:
            # shift by nx*ny so indices start at 0
            gidx = nx * ny * (nz - 1 - k) + nx * j + i
        self.ijk = np.empty((self.ncells, 3), dtype=np.int64)
        self.ijk[gidx] = np.stack([i, j, k], axis=1)
        self.region = np.zeros(self.ncells, dtype=np.int64)
        self.neighbors = self._build_neighbors()

    def index_of(self, ijk: Sequence[int]) -> int:
        """Global index of a cell under the grid's active numbering"""
        if self.spec.numbering == "bottom_up":
            return cell_index_bottom_up(ijk, self.spec)
        return cell_index_top_down(ijk, self.spec) - self.spec.ncx * self.spec.ncy

    def _index_array(self, ijk: np.ndarray) -> np.ndarray:
        nx, ny, nz = self.spec.dims
        i, j, k = ijk[..., 0], ijk[..., 1], ijk[..., 2]
        if self.spec.numbering == "bottom_up":
            return nx * ny * k + nx * j + i
        return nx * ny * (nz - 1 - k) + nx * j + i

    def _build_neighbors(self) -> np.ndarray:
        dims = np.array(self.spec.dims)
        nbr = np.full((self.ncells, 6), -1, dtype=np.int64)
        for f, off in enumerate(FACE_OFFSETS):
            other = self.ijk + np.array(off)
            inside = np.all((other >= 0) & (other < dims), axis=1)
            nbr[inside, f] = self._index_array(other[inside])
        return nbr

    @cached_property
    def centroids(self) -> np.ndarray:
        s = self.spec
        cx = 0.5 * (s.vx[:-1] + s.vx[1:])
        cy = 0.5 * (s.vy[:-1] + s.vy[1:])
        cz = 0.5 * (s.vz[:-1] + s.vz[1:])
        return np.stack([cx[self.ijk[:, 0]], cy[self.ijk[:, 1]], cz[self.ijk[:, 2]]], axis=1)

    @cached_property
    def spacings(self) -> np.ndarray:
        s = self.spec
        return np.stack([np.diff(s.vx)[self.ijk[:, 0]], np.diff(s.vy)[self.ijk[:, 1]],
                         np.diff(s.vz)[self.ijk[:, 2]]], axis=1)

    @cached_property
    def volumes(self) -> np.ndarray:
        h = self.spacings
        return h[:, 0] * h[:, 1] * h[:, 2]

    @cached_property
    def face_areas(self) -> np.ndarray:
        h = self.spacings
        ax, ay, az = h[:, 1] * h[:, 2], h[:, 0] * h[:, 2], h[:, 0] * h[:, 1]
        return np.stack([ax, ax, ay, ay, az, az], axis=1)

    @cached_property
    def boundary_type(self) -> np.ndarray:
        return np.where(self.neighbors < 0, CLOSED, INTERIOR)

    def cell(self, global_index: int, local_index: Optional[int] = None) -> Cell:
        g = int(global_index)
        if g < 0 or g >= self.ncells:
            raise InvalidCoordinateError(f"cell index {g} outside [0, {self.ncells})")
        return Cell(
            ijk=tuple(int(v) for v in self.ijk[g]),
            global_index=g,
            local_index=g if local_index is None else local_index,
            region=int(self.region[g]),
            boundary_type=tuple(int(v) for v in self.boundary_type[g]),
            centroid=tuple(float(v) for v in self.centroids[g]),
            face_areas=tuple(float(v) for v in self.face_areas[g]),
            volume=float(self.volumes[g]),
        )

    def neighbors_of(self, global_index: int) -> List[FaceLink]:
        links = []
        for f, other in enumerate(self.neighbors[global_index]):
            if other < 0:
                links.append(FaceLink(f, "boundary", -1, boundary_tag=CLOSED))
            else:
                links.append(FaceLink(f, "local", int(other)))
        return links


def build_grid(spec: GridSpec) -> StructuredGrid:
    return StructuredGrid(spec)


def neighbors(grid, cell: Cell) -> List[FaceLink]:
    """Six face links of a cell on a global or rank-local grid"""
    if hasattr(grid, "local_neighbors"):
        return grid.local_neighbors(cell.local_index)
    return grid.neighbors_of(cell.global_index)


def export_cell_field_csv(grid: StructuredGrid, cells: Sequence[int], values: np.ndarray,
                          path: str, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Write global_index, centroid and field components of the given cells"""
    cells = np.asarray(cells, dtype=np.int64)
    vals = np.asarray(values).reshape(len(cells), -1)
    names = list(names) if names else [f"v{c}" for c in range(vals.shape[1])]
    df = pd.DataFrame({"global_index": cells})
    cen = grid.centroids[cells]
    df["x"], df["y"], df["z"] = cen[:, 0], cen[:, 1], cen[:, 2]
    for c, name in enumerate(names):
        df[name] = vals[:, c]
    df.to_csv(path, index=False)
    return df
