import numpy as np
import pytest
import scipy.sparse as sp

from common.errors import (AlreadyAssembledError, InvalidArgumentError, InvalidLayoutError, MapMismatchError,
                           NotAssembledError, WrongOwnerError)
from linalg.csr import CsrMatrix
from linalg.layout import BlockLayout
from linalg.matrix import (DistMatrix, extract_local_csr, fetch_rows, from_global_csr, gather_global_csr,
                           residual, spmv)
from linalg.vector import DistVector, axpby, axpbyz, dot, norm2
from runtime.index_map import IndexMap, build_block_map, offsets_from_sizes
from runtime.ranks import serial_context, spawn_ranks


def random_matrix(n, density=0.1, seed=3):
    rng = np.random.default_rng(seed)
    m = sp.random(n, n, density=density, random_state=rng, format="csr")
    return (m + sp.eye(n) * n).tocsr()


def _distributed_ops(ctx, matrix, x_full, y_full):
    row_map = build_block_map(matrix.shape[0], ctx)
    A = from_global_csr(matrix, row_map, ctx)
    x = DistVector.from_global(A.row_map, x_full, ctx)
    y = DistVector.from_global(A.row_map, y_full, ctx)
    z = spmv(1.0, A, x, 0.0, A.create_vector())
    w = spmv(2.0, A, x, -1.0, y, out=A.create_vector())
    axpby(0.5, x, 2.0, y)
    return {
        "ax": z.gather(),
        "w": w.gather(),
        "y": y.gather(),
        "dot": dot(x, x),
        "norm": norm2(x),
        "nnz": ctx.allreduce_sum(A.local.nnz),
        "global": gather_global_csr(A).toarray(),
    }


def _fetch_program(ctx, matrix):
    A = from_global_csr(matrix, build_block_map(matrix.shape[0], ctx), ctx)
    wanted = [0, matrix.shape[0] - 1] if ctx.rank == 0 else []
    return {g: (c.tolist(), v.tolist()) for g, (c, v) in fetch_rows(A, wanted).items()}


def _identity_program(ctx, n):
    row_map = build_block_map(n, ctx)
    A = DistMatrix(row_map, ctx)
    for g in range(row_map.first, row_map.first + row_map.nlocal):
        A.add_entry(g, g, 1.0)
    A.assemble()
    return len(A.col_map.halo)


class TestCsrMatrix:
    def test_from_dense(self):
        """Test CSR arrays of a small dense matrix"""
        m = CsrMatrix.from_dense([[2, 0], [1, 3]])
        assert m.row_ptr.tolist() == [0, 1, 3]
        assert m.col_idx.tolist() == [0, 0, 1]
        assert m.num_nonzeros == 3
        assert np.array_equal(m.to_scipy().toarray(), [[2, 0], [1, 3]])

    def test_invalid_arrays(self):
        """Test inconsistent CSR arrays are rejected"""
        with pytest.raises(InvalidArgumentError):
            CsrMatrix(2, 2, [0, 1], [0], [1.0])
        with pytest.raises(InvalidArgumentError):
            CsrMatrix(1, 2, [0, 1], [2], [1.0])


class TestDistMatrix:
    def test_entries_sum(self):
        """Test repeated adds at one position accumulate"""
        ctx = serial_context()
        A = DistMatrix(build_block_map(2, ctx), ctx)
        A.add_entry(0, 1, 1.0)
        A.add_entry(0, 1, 1.0)
        A.add_entry(1, 1, 4.0)
        A.assemble()
        assert A.local.toarray().tolist() == [[0.0, 2.0], [0.0, 4.0]]
        assert A.diagonal().tolist() == [0.0, 4.0]

    def test_read_only_after_assembly(self):
        """Test adds after assembly raise AlreadyAssembledError"""
        ctx = serial_context()
        A = DistMatrix(build_block_map(2, ctx), ctx).assemble()
        with pytest.raises(AlreadyAssembledError):
            A.add_entry(0, 0, 1.0)
        with pytest.raises(AlreadyAssembledError):
            A.assemble()

    def test_wrong_owner(self):
        """Test rows owned elsewhere are rejected"""
        imap = IndexMap(0, offsets_from_sizes([2, 2]))
        A = DistMatrix(imap, serial_context())
        with pytest.raises(WrongOwnerError, match="row 3"):
            A.add_entry(3, 0, 1.0)
        with pytest.raises(InvalidArgumentError):
            A.add_entry(0, 4, 1.0)

    def test_unassembled_use(self):
        """Test spmv and extraction need an assembled matrix"""
        ctx = serial_context()
        A = DistMatrix(build_block_map(2, ctx), ctx)
        x = A.create_vector()
        with pytest.raises(NotAssembledError):
            spmv(1.0, A, x, 0.0, A.create_vector())
        with pytest.raises(NotAssembledError):
            extract_local_csr(A)

    def test_identity_has_no_halo(self):
        """Test an identity pattern assembles with empty halo on every rank"""
        assert spawn_ranks(3, _identity_program, 7) == [0, 0, 0]


class TestSpmv:
    def test_identity(self):
        """Test A = I copies x"""
        ctx = serial_context()
        A = from_global_csr(sp.eye(3, format="csr"), build_block_map(3, ctx), ctx)
        x = A.create_vector(np.array([1.0, -2.0, 3.0]))
        y = spmv(1.0, A, x, 0.0, A.create_vector())
        assert y.owned.tolist() == [1.0, -2.0, 3.0]

    def test_small_dense(self):
        """Test a 2x2 product against the dense oracle"""
        ctx = serial_context()
        A = from_global_csr(sp.csr_matrix([[2.0, 0.0], [1.0, 3.0]]), build_block_map(2, ctx), ctx)
        y = spmv(1.0, A, A.create_vector(np.ones(2)), 0.0, A.create_vector())
        assert y.owned.tolist() == [2.0, 4.0]
        r = residual(A, A.create_vector(np.array([2.0, 4.0])), A.create_vector(np.ones(2)))
        assert r.owned.tolist() == [0.0, 0.0]

    def test_map_mismatch(self):
        """Test vectors on a different distribution are rejected"""
        ctx = serial_context()
        A = from_global_csr(sp.eye(3, format="csr"), build_block_map(3, ctx), ctx)
        x = DistVector(build_block_map(4, ctx), None, ctx)
        with pytest.raises(MapMismatchError):
            spmv(1.0, A, x, 0.0, A.create_vector())

    @pytest.mark.parametrize("nprocs", [2, 3, 5])
    def test_distributed_matches_serial(self, nprocs):
        """Test distributed kernels agree with the single-rank reference"""
        n = 60
        matrix = random_matrix(n)
        rng = np.random.default_rng(9)
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        serial = spawn_ranks(1, _distributed_ops, matrix, x, y)[0]
        assert np.allclose(serial["ax"], matrix @ x, rtol=1e-13)
        for result in spawn_ranks(nprocs, _distributed_ops, matrix, x, y):
            assert np.allclose(result["ax"], serial["ax"], rtol=1e-13, atol=0)
            assert np.allclose(result["w"], 2 * (matrix @ x) - y, rtol=1e-12)
            assert np.allclose(result["y"], 0.5 * x + 2.0 * y)
            assert result["dot"] == serial["dot"]
            assert result["norm"] == serial["norm"]
            assert result["norm"] == pytest.approx(np.linalg.norm(x), rel=1e-13)
            assert result["nnz"] == matrix.nnz
            assert np.array_equal(result["global"], matrix.toarray())

    @pytest.mark.parametrize("nprocs", [2, 4, 8])
    def test_random_systems_match_single_rank(self, nprocs):
        """Test SpMV, dot and norm on 50 random sparse systems against one rank"""
        rng = np.random.default_rng(2024)
        for seed in range(50):
            n = int(rng.integers(nprocs, 201))
            matrix = random_matrix(n, density=float(rng.uniform(0.01, 0.2)), seed=seed)
            x, y = rng.standard_normal(n), rng.standard_normal(n)
            serial = spawn_ranks(1, _distributed_ops, matrix, x, y)[0]
            result = spawn_ranks(nprocs, _distributed_ops, matrix, x, y)[0]
            scale = np.abs(serial["ax"]).max()
            assert np.abs(result["ax"] - serial["ax"]).max() <= 1e-13 * scale
            assert result["dot"] == serial["dot"]
            assert result["norm"] == serial["norm"]

    def test_fetch_rows(self):
        """Test rows fetched from their owners carry global columns"""
        matrix = random_matrix(12, seed=5)
        results = spawn_ranks(3, _fetch_program, matrix)
        for g, (cols, vals) in results[0].items():
            row = matrix.getrow(g)
            assert dict(zip(cols, vals)) == pytest.approx(dict(zip(row.indices.tolist(), row.data.tolist())))
        assert results[1] == {}


class TestVectorOps:
    def setup_method(self):
        """Setup test fixtures"""
        self.ctx = serial_context()
        self.map = build_block_map(3, self.ctx)

    def test_dot_and_norm(self):
        """Test dot and norm by hand arithmetic"""
        x = DistVector(self.map, np.array([1.0, 2.0, 3.0]), self.ctx)
        y = DistVector(self.map, np.array([4.0, 5.0, 6.0]), self.ctx)
        assert dot(x, y) == 32.0
        assert norm2(x.zeros_like()) == 0.0

    def test_axpby_copies(self):
        """Test axpby(1, x, 0, y) copies x and axpbyz leaves y alone"""
        x = DistVector(self.map, np.array([1.0, 2.0, 3.0]), self.ctx)
        y = DistVector(self.map, np.array([9.0, 9.0, 9.0]), self.ctx)
        z = axpbyz(1.0, x, 1.0, y)
        assert z.owned.tolist() == [10.0, 11.0, 12.0]
        assert y.owned.tolist() == [9.0, 9.0, 9.0]
        axpby(1.0, x, 0.0, y)
        assert y.owned.tolist() == [1.0, 2.0, 3.0]

    def test_mismatched_maps(self):
        """Test operations on different maps raise MapMismatchError"""
        x = DistVector(self.map, None, self.ctx)
        other = DistVector(build_block_map(4, self.ctx), None, self.ctx)
        with pytest.raises(MapMismatchError):
            dot(x, other)
        with pytest.raises(MapMismatchError):
            DistVector(self.map, np.zeros(5), self.ctx)


class TestExtractLocal:
    def test_single_rank_full_matrix(self):
        """Test the local CSR of one rank is the whole matrix"""
        ctx = serial_context()
        matrix = random_matrix(20, seed=1)
        A = from_global_csr(matrix, build_block_map(20, ctx), ctx)
        csr = extract_local_csr(A)
        assert csr.row_ptr[-1] == matrix.nnz
        rebuilt = from_global_csr(csr.to_scipy(), build_block_map(20, ctx), ctx)
        x = np.linspace(0, 1, 20)
        a = spmv(1.0, A, A.create_vector(x), 0.0, A.create_vector()).owned
        b = spmv(1.0, rebuilt, rebuilt.create_vector(x), 0.0, rebuilt.create_vector()).owned
        assert np.array_equal(a, b)


class TestBlockLayout:
    def test_orderings(self):
        """Test row placement of interleaved and segregated layouts"""
        inter = BlockLayout(2)
        seg = BlockLayout(2, ordering="segregated")
        assert inter.local_row(np.array([0, 1, 2]), 1, 3).tolist() == [1, 3, 5]
        assert seg.local_row(np.array([0, 1, 2]), 1, 3).tolist() == [3, 4, 5]
        pos, unk = seg.split_local_row([4], 3)
        assert (pos.tolist(), unk.tolist()) == ([1], [1])

    def test_invalid_layout(self):
        """Test bad layouts raise InvalidLayoutError"""
        with pytest.raises(InvalidLayoutError):
            BlockLayout(0)
        with pytest.raises(InvalidLayoutError):
            BlockLayout(2, pressure_unknown=2)
        with pytest.raises(InvalidLayoutError):
            BlockLayout(2, ordering="blocked")


if __name__ == "__main__":
    pytest.main([__file__])
