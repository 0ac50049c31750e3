"""
Index maps and halo communication plans
Owned rows of each rank form a contiguous global range; halo entries are
appended after the owned ones in ascending global order.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Union

import numpy as np

from common.errors import InvalidArgumentError, MapMismatchError, PlanMismatchError
from linalg.layout import BlockLayout

EXCHANGE_TAG = 11


@dataclass(eq=False)
class IndexMap:
    """Local/global numbering of one rank"""
    rank: int
    offsets: np.ndarray  # offsets[p] = first global index of rank p
    halo: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.halo = np.asarray(self.halo, dtype=np.int64)
        if np.any(np.diff(self.offsets) < 0):
            raise InvalidArgumentError("offsets must be non-decreasing")
        if len(self.halo) and np.any(np.diff(self.halo) <= 0):
            raise InvalidArgumentError("halo indices must be strictly increasing")
        lo, hi = self.first, self.first + self.nlocal
        if len(self.halo) and np.any((self.halo >= lo) & (self.halo < hi)):
            raise InvalidArgumentError("halo overlaps owned range")

    @property
    def nprocs(self) -> int:
        return len(self.offsets) - 1

    @property
    def first(self) -> int:
        return int(self.offsets[self.rank])

    @property
    def nlocal(self) -> int:
        return int(self.offsets[self.rank + 1] - self.offsets[self.rank])

    @property
    def ntlocal(self) -> int:
        return self.nlocal + len(self.halo)

    @property
    def nglobal(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def l2g(self) -> np.ndarray:
        return np.concatenate([np.arange(self.first, self.first + self.nlocal, dtype=np.int64), self.halo])

    @cached_property
    def halo_owner(self) -> np.ndarray:
        return self.owner_of(self.halo)

    def owner_of(self, gidx) -> np.ndarray:
        return np.searchsorted(self.offsets, np.asarray(gidx, dtype=np.int64), side="right") - 1

    def owns(self, gidx) -> np.ndarray:
        g = np.asarray(gidx, dtype=np.int64)
        return (g >= self.first) & (g < self.first + self.nlocal)

    def global_to_local(self, gidx) -> np.ndarray:
        """Local slots of owned or halo global indices"""
        g = np.atleast_1d(np.asarray(gidx, dtype=np.int64))
        out = np.empty(len(g), dtype=np.int64)
        owned = self.owns(g)
        out[owned] = g[owned] - self.first
        rest = g[~owned]
        if len(rest) == 0:
            return out
        pos = np.searchsorted(self.halo, rest)
        found = pos < len(self.halo)
        found[found] = self.halo[pos[found]] == rest[found]
        if not np.all(found):
            missing = rest[~found][:5].tolist()
            raise InvalidArgumentError(f"global indices {missing} are not local on rank {self.rank}")
        out[~owned] = self.nlocal + pos
        return out

    def same_layout(self, other: "IndexMap") -> bool:
        return self is other or (self.rank == other.rank and np.array_equal(self.offsets, other.offsets))

    def owned_map(self) -> "IndexMap":
        """Same ownership without halo"""
        return IndexMap(self.rank, self.offsets)

    def with_halo(self, halo: Sequence[int]) -> "IndexMap":
        return IndexMap(self.rank, self.offsets, np.unique(np.asarray(halo, dtype=np.int64)))


def check_same_layout(a: IndexMap, b: IndexMap):
    if not a.same_layout(b):
        raise MapMismatchError(f"index maps differ (rank {a.rank} owns {a.nlocal} vs {b.nlocal} entries)")


def offsets_from_sizes(sizes: Sequence[int]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(np.asarray(sizes, dtype=np.int64))]).astype(np.int64)


def build_block_map(nglobal: int, ctx) -> IndexMap:
    """Balanced contiguous row ranges, no halo"""
    base, extra = divmod(nglobal, ctx.nprocs)
    sizes = [base + 1 if r < extra else base for r in range(ctx.nprocs)]
    return IndexMap(ctx.rank, offsets_from_sizes(sizes))


def build_index_map(grid, partition, rank: int,
                    layout: Union[int, BlockLayout] = 1) -> IndexMap:
    """Row numbering of a partitioned grid.

    Rows are rank-contiguous (rank 0 first); inside a rank the layout decides
    how the unknowns of each cell are placed. Halo rows are all unknowns of
    off-rank face neighbors.
    """
    if isinstance(layout, int):
        layout = BlockLayout(unknowns_per_cell=layout, pressure_unknown=None)
    offsets = layout.row_offsets(partition.sizes)
    owned = partition.cells_of(rank)
    nbr = grid.neighbors[owned]
    nbr = np.unique(nbr[nbr >= 0])
    remote = nbr[partition.owner[nbr] != rank]
    halo = [layout.global_rows(partition, remote, u) for u in range(layout.unknowns_per_cell)]
    halo = np.unique(np.concatenate(halo)) if len(remote) else np.empty(0, dtype=np.int64)
    return IndexMap(rank, offsets, halo)


@dataclass(eq=False)
class CommPlan:
    """Halo exchange schedule: what to pack for each peer and where replies land"""
    nlocal: int
    ntlocal: int
    sidx: np.ndarray
    widx: np.ndarray
    scnts: np.ndarray
    sdsps: np.ndarray
    rcnts: np.ndarray
    rdsps: np.ndarray

    @property
    def ssize(self) -> int:
        return int(self.scnts.sum())

    @property
    def rsize(self) -> int:
        return int(self.rcnts.sum())


def build_comm_plan(imap: IndexMap, ctx) -> CommPlan:
    """Collective: ask owners for halo entries, then confirm counts pairwise"""
    nprocs = ctx.nprocs
    if imap.nprocs != nprocs:
        raise PlanMismatchError(f"map built for {imap.nprocs} ranks used on {nprocs}")
    all_offsets = ctx.allgather(imap.offsets)
    if any(not np.array_equal(o, imap.offsets) for o in all_offsets):
        raise PlanMismatchError("ranks disagree on global offsets")

    owners = imap.halo_owner
    requests = [imap.halo[owners == p] for p in range(nprocs)]
    rcnts = np.array([len(r) for r in requests], dtype=np.int64)
    incoming = ctx.alltoall(requests)

    sidx_parts = []
    for p, wanted in enumerate(incoming):
        wanted = np.asarray(wanted, dtype=np.int64)
        if len(wanted) and not np.all(imap.owns(wanted)):
            raise PlanMismatchError(f"rank {p} requested entries not owned by rank {ctx.rank}")
        sidx_parts.append(wanted - imap.first)
    scnts = np.array([len(s) for s in sidx_parts], dtype=np.int64)

    # handshake: what I will send to p must be what p expects from me
    expected = ctx.alltoall([int(c) for c in rcnts])
    for p in range(nprocs):
        if expected[p] != scnts[p]:
            raise PlanMismatchError(f"rank {p} expects {expected[p]} entries, rank {ctx.rank} sends {scnts[p]}")

    sidx = np.concatenate(sidx_parts) if sidx_parts else np.empty(0, dtype=np.int64)
    widx = imap.nlocal + np.arange(len(imap.halo), dtype=np.int64)
    return CommPlan(
        nlocal=imap.nlocal, ntlocal=imap.ntlocal,
        sidx=sidx.astype(np.int64), widx=widx,
        scnts=scnts, sdsps=offsets_from_sizes(scnts)[:-1],
        rcnts=rcnts, rdsps=offsets_from_sizes(rcnts)[:-1],
    )


def exchange(plan: CommPlan, values: np.ndarray, ctx) -> np.ndarray:
    """Fill the halo rows of values (length ntlocal) from their owners; returns the halo part"""
    if values.shape[0] != plan.ntlocal:
        raise MapMismatchError(f"exchange buffer has {values.shape[0]} rows, plan needs {plan.ntlocal}")
    for p in range(len(plan.scnts)):
        if plan.scnts[p]:
            lo = plan.sdsps[p]
            ctx.send(p, values[plan.sidx[lo:lo + plan.scnts[p]]], tag=EXCHANGE_TAG)
    for p in range(len(plan.rcnts)):
        if plan.rcnts[p]:
            lo = plan.rdsps[p]
            values[plan.widx[lo:lo + plan.rcnts[p]]] = ctx.recv(p, tag=EXCHANGE_TAG)
    return values[plan.nlocal:]
