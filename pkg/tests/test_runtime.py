import math

import numpy as np
import pytest

from common.errors import (CollectiveMismatchError, InvalidArgumentError, MapMismatchError,
                           PlanMismatchError, RankFailureError)
from grid.structured import GridSpec, build_grid
from linalg.layout import BlockLayout
from partition.sfc_partition import partition_block, partition_sfc
from runtime.index_map import (IndexMap, build_block_map, build_comm_plan, build_index_map, exchange,
                               offsets_from_sizes)
from runtime.ranks import serial_context, spawn_ranks


def _rank(ctx):
    return ctx.rank


def _barrier_sum(ctx):
    ctx.barrier()
    return ctx.allreduce_sum(ctx.rank)


def _ring(ctx):
    right = (ctx.rank + 1) % ctx.nprocs
    left = (ctx.rank - 1) % ctx.nprocs
    ctx.send(right, np.array([ctx.rank, 10 * ctx.rank]))
    return ctx.recv(left).tolist()


def _collectives(ctx):
    gathered = ctx.allgather(ctx.rank * 2)
    root_value = ctx.broadcast("hello" if ctx.rank == 1 else None, root=1)
    swapped = ctx.alltoall([(ctx.rank, p) for p in range(ctx.nprocs)])
    top = ctx.allreduce_max(np.array([ctx.rank, -ctx.rank]))
    return gathered, root_value, swapped, top.tolist()


def _float_sum(ctx, values):
    return ctx.allreduce_sum(values[ctx.rank])


def _fsum_share(ctx, terms):
    terms = np.asarray(terms)
    share = np.array_split(np.arange(terms.shape[-1]), ctx.nprocs)[ctx.rank]
    return ctx.allreduce_fsum(terms[..., share])


def _fail_on_two(ctx):
    ctx.barrier()
    if ctx.rank == 2:
        raise ValueError("boom")
    ctx.barrier()
    return ctx.rank


def _mismatch(ctx):
    if ctx.rank == 0:
        return ctx.allgather(1)
    return ctx.broadcast(1)


def _exchange_program(ctx, grid, method):
    partition = partition_sfc(grid, ctx.nprocs, method, ctx)
    imap = build_index_map(grid, partition, ctx.rank)
    plan = build_comm_plan(imap, ctx)
    values = np.zeros(imap.ntlocal)
    values[:imap.nlocal] = imap.l2g[:imap.nlocal] * 1.5
    first = exchange(plan, values, ctx).copy()
    second = exchange(plan, values, ctx).copy()
    return imap.halo.tolist(), first.tolist(), second.tolist(), imap.nlocal, imap.ntlocal


def _bad_plan(ctx):
    sizes = [2, 2] if ctx.rank == 0 else [1, 3]
    imap = IndexMap(ctx.rank, offsets_from_sizes(sizes))
    return build_comm_plan(imap, ctx)


class TestSpawnRanks:
    def test_results_in_rank_order(self):
        """Test program results come back ordered by rank"""
        assert spawn_ranks(1, _rank) == [0]
        assert spawn_ranks(4, _rank) == [0, 1, 2, 3]

    def test_barrier_and_sum(self):
        """Test allreduce of rank ids after a barrier"""
        assert spawn_ranks(4, _barrier_sum) == [6, 6, 6, 6]

    def test_point_to_point(self):
        """Test messages travel around a ring"""
        results = spawn_ranks(3, _ring)
        assert results == [[2, 20], [0, 0], [1, 10]]

    def test_collectives(self):
        """Test allgather, broadcast, alltoall and allreduce_max"""
        for gathered, root_value, swapped, top in spawn_ranks(3, _collectives):
            assert gathered == [0, 2, 4]
            assert root_value == "hello"
            assert top == [2, 0]
        for rank, (_, _, swapped, _) in enumerate(spawn_ranks(3, _collectives)):
            assert swapped == [(p, rank) for p in range(3)]

    def test_sum_is_reproducible(self):
        """Test a fixed combine order gives bitwise identical sums"""
        values = [0.1, 1e16, -1e16, 0.3, 1e-8, 7.0, -0.2, 3.3]
        runs = [spawn_ranks(8, _float_sum, values) for _ in range(5)]
        assert all(r == runs[0] for r in runs)
        assert len(set(runs[0])) == 1
        assert spawn_ranks(8, _float_sum, [1.0] * 8)[0] == 8.0

    @pytest.mark.parametrize("nprocs", [1, 2, 3, 8])
    def test_fsum_independent_of_rank_count(self, nprocs):
        """Test the correctly rounded sum is identical for every split of the terms"""
        terms = np.array([0.1, 1e16, -1e16, 0.3, 1e-8, 7.0, -0.2, 3.3, 1e-17, 2.5e15])
        for total in spawn_ranks(nprocs, _fsum_share, terms):
            assert total == math.fsum(terms.tolist())
        rows = np.vstack([terms, terms[::-1] * 3.0])
        for totals in spawn_ranks(nprocs, _fsum_share, rows):
            assert totals.tolist() == [math.fsum(r) for r in rows.tolist()]

    def test_fsum_rejects_3d_terms(self):
        """Test terms with more than two axes are rejected"""
        with pytest.raises(InvalidArgumentError, match="1D or 2D"):
            serial_context().allreduce_fsum(np.zeros((2, 2, 2)))

    def test_failure_names_rank(self):
        """Test a failing rank aborts the group and is reported"""
        with pytest.raises(RankFailureError, match="rank 2") as info:
            spawn_ranks(4, _fail_on_two, timeout=10.0)
        assert info.value.rank == 2
        assert isinstance(info.value.original, ValueError)

    def test_collective_mismatch(self):
        """Test ranks entering different collectives fail"""
        with pytest.raises(RankFailureError) as info:
            spawn_ranks(2, _mismatch, timeout=10.0)
        assert isinstance(info.value.original, CollectiveMismatchError)

    def test_invalid_group(self):
        """Test zero ranks are rejected"""
        with pytest.raises(InvalidArgumentError):
            spawn_ranks(0, _rank)

    def test_serial_identity(self):
        """Test single-rank collectives return the input"""
        ctx = serial_context()
        assert ctx.allreduce_sum(3.5) == 3.5
        assert ctx.broadcast([1, 2]) == [1, 2]
        assert ctx.allgather(7) == [7]


class TestIndexMap:
    def test_single_rank(self):
        """Test np=1 map has no halo"""
        grid = build_grid(GridSpec(3, 2, 1))
        imap = build_index_map(grid, partition_block(grid, 1), 0)
        assert imap.nlocal == imap.ntlocal == 6
        assert imap.l2g.tolist() == list(range(6))

    def test_two_cells(self):
        """Test 2x1x1 on 2 ranks: one owned row and one halo row each"""
        grid = build_grid(GridSpec(2, 1, 1))
        part = partition_block(grid, 2)
        for rank in range(2):
            imap = build_index_map(grid, part, rank)
            assert imap.offsets.tolist() == [0, 1, 2]
            assert imap.ntlocal == 2
            assert imap.halo.tolist() == [1 - rank]

    def test_block_layout_rows(self):
        """Test two unknowns per cell double the rows and halo"""
        grid = build_grid(GridSpec(2, 1, 1))
        part = partition_block(grid, 2)
        imap = build_index_map(grid, part, 0, BlockLayout(2))
        assert imap.offsets.tolist() == [0, 2, 4]
        assert imap.halo.tolist() == [2, 3]

    def test_global_to_local(self):
        """Test owned and halo lookups, and unknown indices"""
        imap = IndexMap(1, np.array([0, 3, 6, 9]), np.array([1, 7]))
        assert imap.global_to_local([3, 5, 1, 7]).tolist() == [0, 2, 3, 4]
        assert imap.owner_of([0, 4, 8]).tolist() == [0, 1, 2]
        with pytest.raises(InvalidArgumentError, match="not local"):
            imap.global_to_local([8])

    def test_invalid_halo(self):
        """Test halo overlapping the owned range is rejected"""
        with pytest.raises(InvalidArgumentError):
            IndexMap(0, np.array([0, 2, 4]), np.array([1]))

    def test_block_map(self):
        """Test balanced block maps"""
        ctx = serial_context()
        assert build_block_map(5, ctx).nlocal == 5


class TestExchange:
    @pytest.mark.parametrize("nprocs,method", [(2, "hsfc"), (3, "msfc"), (4, "hsfc")])
    def test_halo_equals_owner_values(self, nprocs, method):
        """Test exchanged halo values match the owners' values and repeat exactly"""
        grid = build_grid(GridSpec(4, 3, 2))
        for halo, first, second, nlocal, ntlocal in spawn_ranks(nprocs, _exchange_program, grid, method):
            assert ntlocal - nlocal == len(halo) > 0
            assert first == pytest.approx([1.5 * g for g in halo])
            assert first == second

    def test_empty_halo_is_noop(self):
        """Test exchange with one rank touches nothing"""
        grid = build_grid(GridSpec(2, 2, 1))
        ctx = serial_context()
        imap = build_index_map(grid, partition_block(grid, 1), 0)
        plan = build_comm_plan(imap, ctx)
        assert plan.ssize == plan.rsize == 0
        values = np.arange(4.0)
        assert len(exchange(plan, values, ctx)) == 0
        assert values.tolist() == [0.0, 1.0, 2.0, 3.0]

    def test_wrong_buffer_length(self):
        """Test a buffer of the wrong length is rejected"""
        ctx = serial_context()
        imap = IndexMap(0, np.array([0, 3]))
        plan = build_comm_plan(imap, ctx)
        with pytest.raises(MapMismatchError):
            exchange(plan, np.zeros(4), ctx)

    def test_disagreeing_offsets(self):
        """Test ranks with different offsets cannot build a plan"""
        with pytest.raises(RankFailureError) as info:
            spawn_ranks(2, _bad_plan, timeout=10.0)
        assert isinstance(info.value.original, PlanMismatchError)


if __name__ == "__main__":
    pytest.main([__file__])
