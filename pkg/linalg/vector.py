"""
Distributed vector and the vector operations of the algebra layer
"""

from typing import Optional, Sequence

import numpy as np

from common.errors import MapMismatchError, NotAssembledError
from runtime.index_map import IndexMap, check_same_layout, exchange, build_comm_plan
from runtime.ranks import serial_context


class DistVector:
    """Owned entries followed by halo slots of an index map"""

    def __init__(self, imap: IndexMap, values: Optional[np.ndarray] = None, ctx=None):
        self.map = imap
        self.ctx = ctx if ctx is not None else serial_context()
        if values is None:
            self.values = np.zeros(imap.ntlocal)
        else:
            values = np.asarray(values, dtype=float)
            if values.shape[0] == imap.nlocal and imap.ntlocal != imap.nlocal:
                values = np.concatenate([values, np.zeros(imap.ntlocal - imap.nlocal)])
            if values.shape[0] != imap.ntlocal:
                raise MapMismatchError(f"vector of length {values.shape[0]} on a map with {imap.ntlocal} slots")
            self.values = values
        self._plan = None

    @property
    def owned(self) -> np.ndarray:
        return self.values[:self.map.nlocal]

    @owned.setter
    def owned(self, data):
        self.values[:self.map.nlocal] = data

    def copy(self) -> "DistVector":
        return DistVector(self.map, self.values.copy(), self.ctx)

    def zeros_like(self) -> "DistVector":
        return DistVector(self.map, None, self.ctx)

    def build_plan(self):
        self._plan = build_comm_plan(self.map, self.ctx)
        return self._plan

    def exchange(self) -> np.ndarray:
        if self.map.ntlocal == self.map.nlocal:
            return self.values[self.map.nlocal:]
        if self._plan is None:
            raise NotAssembledError("halo exchange before the communication plan is built")
        return exchange(self._plan, self.values, self.ctx)

    def gather(self) -> np.ndarray:
        """Full global vector on every rank"""
        return np.concatenate(self.ctx.allgather(self.owned))

    @classmethod
    def from_global(cls, imap: IndexMap, full: Sequence[float], ctx=None) -> "DistVector":
        full = np.asarray(full, dtype=float)
        return cls(imap, full[imap.first:imap.first + imap.nlocal].copy(), ctx)


def axpby(alpha: float, x: DistVector, beta: float, y: DistVector) -> DistVector:
    """y := alpha x + beta y"""
    check_same_layout(x.map, y.map)
    y.owned = alpha * x.owned + beta * y.owned
    return y


def axpbyz(alpha: float, x: DistVector, beta: float, y: DistVector) -> DistVector:
    """z := alpha x + beta y"""
    check_same_layout(x.map, y.map)
    return DistVector(y.map.owned_map(), alpha * x.owned + beta * y.owned, y.ctx)


def dot(x: DistVector, y: DistVector) -> float:
    check_same_layout(x.map, y.map)
    return float(x.ctx.allreduce_fsum(x.owned * y.owned))


def norm2(x: DistVector) -> float:
    return float(np.sqrt(dot(x, x)))


def multi_dot(basis: np.ndarray, w: np.ndarray, ctx) -> np.ndarray:
    """basis @ w over owned rows, reduced with a single collective"""
    return ctx.allreduce_fsum(basis * w)


def combine(basis: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """sum_j coeffs[j] basis[j], accumulated in j order for every entry"""
    out = np.zeros(basis.shape[1])
    for c, row in zip(np.asarray(coeffs, dtype=float).tolist(), basis):
        out = out + c * row
    return out
