"""
Partition quality metrics
Load imbalance, surface indices and inter-processor connectivity
"""

from dataclasses import dataclass, asdict
from typing import Dict, List, Tuple

import numpy as np


@dataclass
class PartitionQuality:
    """Quality of one partition"""
    load_imbalance: float
    max_surface_index: float
    global_surface_index: float
    avg_surface_index: float
    max_connectivity: int
    faces: List[int]  # f_i
    boundary_faces: List[int]  # b_i
    connectivity: List[int]  # c_i

    def as_row(self) -> Dict[str, float]:
        return {
            "f_p": self.load_imbalance,
            "r_max": self.max_surface_index,
            "r_global": self.global_surface_index,
            "r_avg": self.avg_surface_index,
            "c": self.max_connectivity,
        }

    def to_dict(self) -> Dict:
        return asdict(self)


def load_imbalance(partition) -> float:
    sizes = partition.sizes
    return float(partition.nprocs * sizes.max() / sizes.sum())


def face_counts(grid, partition) -> Tuple[np.ndarray, np.ndarray]:
    """Per-rank (f_i, b_i).

    A face shared by two cells of the same rank counts once; a face cut by the
    partition counts once on each side, in both f_i and b_i; domain-boundary
    faces count once.
    """
    nbr = grid.neighbors
    owner = partition.owner
    has = nbr >= 0
    cells = np.repeat(np.arange(grid.ncells), 6).reshape(-1, 6)
    nbr_owner = np.where(has, owner[np.where(has, nbr, 0)], -1)
    same = has & (nbr_owner == owner[:, None])
    cut = has & ~same
    same_per_rank = np.bincount(owner[cells[same]], minlength=partition.nprocs)
    b = np.bincount(owner[cells[cut]], minlength=partition.nprocs)
    f = 6 * partition.sizes - same_per_rank // 2
    return f.astype(np.int64), b.astype(np.int64)


def surface_indices(grid, partition) -> Tuple[float, float, float]:
    """(max_i b_i/f_i, sum b / (sum f - sum b), mean_i b_i/f_i)"""
    f, b = face_counts(grid, partition)
    ratios = b / f
    total_b, total_f = int(b.sum()), int(f.sum())
    global_index = total_b / (total_f - total_b) if total_b > 0 else 0.0
    return float(ratios.max()), float(global_index), float(ratios.sum() / partition.nprocs)


def connectivity(grid, partition) -> Tuple[List[int], int]:
    """Per-rank count of distinct other ranks owning a neighbor, and the maximum"""
    nbr = grid.neighbors
    owner = partition.owner
    has = nbr >= 0
    mine = np.broadcast_to(owner[:, None], nbr.shape)[has]
    theirs = owner[nbr[has]]
    cut = mine != theirs
    pairs = np.unique(np.stack([mine[cut], theirs[cut]], axis=1), axis=0) if cut.any() \
        else np.empty((0, 2), dtype=np.int64)
    per_rank = np.bincount(pairs[:, 0], minlength=partition.nprocs) if len(pairs) \
        else np.zeros(partition.nprocs, dtype=np.int64)
    c = [int(v) for v in per_rank]
    return c, max(c)


def partition_quality(grid, partition) -> PartitionQuality:
    f, b = face_counts(grid, partition)
    r_max, r_global, r_avg = surface_indices(grid, partition)
    c, c_max = connectivity(grid, partition)
    return PartitionQuality(
        load_imbalance=load_imbalance(partition),
        max_surface_index=r_max,
        global_surface_index=r_global,
        avg_surface_index=r_avg,
        max_connectivity=c_max,
        faces=[int(v) for v in f],
        boundary_faces=[int(v) for v in b],
        connectivity=c,
    )
