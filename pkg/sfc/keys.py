"""
Curve keys and lattice helpers shared by all encoders
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from common.errors import DegenerateDomainError, InvalidCoordinateError, InvalidArgumentError


@dataclass(frozen=True)
class CurveKey:
    """Fixed-level curve index: m digits in base 2^n, most significant first"""
    digits: Tuple[int, ...]
    dimension: int

    @property
    def level(self) -> int:
        return len(self.digits)

    @property
    def value(self) -> int:
        """Exact integer key (r_m ... r_1) in base 2^n"""
        key = 0
        for digit in self.digits:
            key = (key << self.dimension) | digit
        return key

    @property
    def normalized(self) -> float:
        """Lossy position on [0, 1)"""
        return self.value / float(1 << (self.dimension * self.level))

    def truncated(self, level: int) -> "CurveKey":
        """Key of the enclosing cell at a coarser level"""
        return CurveKey(self.digits[:level], self.dimension)

    def __lt__(self, other: "CurveKey") -> bool:
        return self.value < other.value


def validate_coord(coord: Sequence[int], level: int) -> Tuple[int, ...]:
    """Check that every component lies in [0, 2^level)"""
    if level < 1:
        raise InvalidArgumentError(f"level must be >= 1, got {level}")
    if len(coord) == 0:
        raise InvalidArgumentError("coordinate has dimension 0")
    limit = 1 << level
    comps = tuple(int(c) for c in coord)
    for c in comps:
        if c < 0 or c >= limit:
            raise InvalidCoordinateError(f"component {c} outside [0, {limit}) for level {level}")
    return comps


def normalize_to_unit_cube(point: Sequence[float], bbox: Sequence[Sequence[float]]) -> np.ndarray:
    """Affine map of a point in bbox onto [0, 1)^n; the upper face is clamped below 1"""
    box = np.asarray(bbox, dtype=float)
    p = np.asarray(point, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or box.shape[0] != p.shape[-1]:
        raise InvalidArgumentError(f"bbox shape {box.shape} does not match point dimension {p.shape[-1]}")
    lo, hi = box[:, 0], box[:, 1]
    extent = hi - lo
    if np.any(extent <= 0):
        axis = int(np.argmax(extent <= 0))
        raise DegenerateDomainError(f"bbox axis {axis} has non-positive extent {extent[axis]}")
    unit = (p - lo) / extent
    return np.clip(unit, 0.0, np.nextafter(1.0, 0.0))


def lattice_coords(unit_points: np.ndarray, level: int) -> np.ndarray:
    """Truncate unit-cube points to integer lattice coordinates of the given level"""
    scale = 1 << level
    coords = np.floor(np.asarray(unit_points, dtype=float) * scale).astype(np.int64)
    return np.clip(coords, 0, scale - 1)
