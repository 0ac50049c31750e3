"""
Morton (Z-order) encoding by bit interleaving
"""

from typing import Sequence

from sfc.keys import CurveKey, validate_coord


def morton_encode(coord: Sequence[int], level: int) -> CurveKey:
    """Interleave the k-th bits of all components, components[0] highest"""
    comps = validate_coord(coord, level)
    n = len(comps)
    digits = []
    for shift in range(level - 1, -1, -1):
        digit = 0
        for c in comps:
            digit = (digit << 1) | ((c >> shift) & 1)
        digits.append(digit)
    return CurveKey(tuple(digits), n)
