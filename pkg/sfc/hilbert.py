"""
Arbitrary-dimension Hilbert encoding

Each level reads one bit per component, turns the bit vector into the
subcube's visit position with the Gray-code map, then moves the remaining
low bits into the orientation of the child curve: reflect the axes set in
g1, then swap the two axes set in g0.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from common.errors import InvalidArgumentError, UnsupportedDimensionError
from sfc.keys import CurveKey, validate_coord

SUPPORTED_DIMENSIONS = (2, 3, 4)


def gray_forward(bits: Sequence[int]) -> int:
    """Map a Gray-coded bit vector (a_1 first) to its position in [0, 2^n)"""
    if len(bits) == 0:
        raise InvalidArgumentError("gray_forward needs at least one bit")
    parity = 0
    value = 0
    for a in bits:
        if a not in (0, 1):
            raise InvalidArgumentError(f"bit values must be 0 or 1, got {a}")
        parity ^= a
        value = (value << 1) | parity
    return value


def gray_backward(j: int, n: int) -> Tuple[int, ...]:
    """Inverse of gray_forward: position j to the Gray-coded bit vector"""
    if n < 1:
        raise InvalidArgumentError(f"dimension must be >= 1, got {n}")
    if j < 0 or j >= (1 << n):
        raise InvalidArgumentError(f"{j} outside [0, {1 << n})")
    g = j ^ (j >> 1)
    return tuple((g >> (n - 1 - i)) & 1 for i in range(n))


@dataclass(frozen=True)
class HilbertGenerator:
    """Orientation change applied after visiting subcube r"""
    g0: Tuple[int, ...]  # transposition: two set bits, or all zero for identity
    g1: Tuple[int, ...]  # reflection mask

    @property
    def swap(self) -> Optional[Tuple[int, int]]:
        axes = [i for i, b in enumerate(self.g0) if b]
        if not axes:
            return None
        return axes[0], axes[1]


# (g0, g1) per subcube r. Subcube r is entered at corner g1 and left at g1 with
# one bit flipped: the axis g0 pairs with axis 0, or axis 0 when g0 is zero.
# Consecutive subcubes meet across their shared face; the last leaves at (1, 0, ...).
_GENERATOR_TABLE = {
    2: (
        ((1, 1), (0, 0)), ((0, 0), (0, 0)), ((0, 0), (0, 0)), ((1, 1), (1, 1)),
    ),
    3: (
        ((1, 0, 1), (0, 0, 0)), ((1, 1, 0), (0, 0, 0)), ((0, 0, 0), (0, 0, 0)), ((1, 1, 0), (1, 0, 1)),
        ((0, 0, 0), (0, 1, 1)), ((1, 1, 0), (1, 1, 0)), ((1, 1, 0), (1, 1, 0)), ((1, 0, 1), (1, 0, 1)),
    ),
    4: (
        ((1, 0, 0, 1), (0, 0, 0, 0)), ((1, 0, 1, 0), (0, 0, 0, 0)),
        ((0, 0, 0, 0), (0, 0, 0, 0)), ((1, 1, 0, 0), (1, 0, 0, 1)),
        ((0, 0, 0, 0), (1, 0, 0, 1)), ((0, 0, 0, 0), (0, 0, 0, 0)),
        ((0, 0, 0, 0), (1, 0, 1, 0)), ((0, 0, 0, 0), (0, 0, 1, 1)),
        ((0, 0, 0, 0), (0, 0, 1, 1)), ((0, 0, 0, 0), (1, 0, 1, 0)),
        ((0, 0, 0, 0), (0, 0, 0, 0)), ((0, 0, 0, 0), (1, 0, 0, 1)),
        ((0, 0, 0, 0), (0, 1, 0, 1)), ((1, 1, 0, 0), (1, 1, 0, 0)),
        ((1, 0, 1, 0), (1, 0, 1, 0)), ((1, 0, 0, 1), (1, 0, 0, 1)),
    ),
}

HILBERT_GENERATORS: Dict[int, Tuple[HilbertGenerator, ...]] = {
    n: tuple(HilbertGenerator(g0=g0, g1=g1) for g0, g1 in rows) for n, rows in _GENERATOR_TABLE.items()
}


def hilbert_encode_nd(coord: Sequence[int], level: int) -> CurveKey:
    """Hilbert key of a lattice coordinate, components[0] most significant"""
    n = len(coord)
    if n not in HILBERT_GENERATORS:
        raise UnsupportedDimensionError(f"Hilbert encoding supports dimensions {SUPPORTED_DIMENSIONS}, got {n}")
    comps = list(validate_coord(coord, level))
    generators = HILBERT_GENERATORS[n]
    digits = []
    for shift in range(level - 1, -1, -1):
        r = gray_forward([(c >> shift) & 1 for c in comps])
        digits.append(r)
        mask = (1 << shift) - 1
        comps = [c & mask for c in comps]
        gen = generators[r]
        for i, reflect in enumerate(gen.g1):
            if reflect:
                comps[i] = mask - comps[i]
        swap = gen.swap
        if swap is not None:
            a, b = swap
            comps[a], comps[b] = comps[b], comps[a]
    return CurveKey(tuple(digits), n)


def encode_many(coords: Sequence[Sequence[int]], level: int) -> List[CurveKey]:
    return [hilbert_encode_nd(c, level) for c in coords]
