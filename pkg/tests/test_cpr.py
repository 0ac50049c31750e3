import numpy as np
import pytest
import scipy.sparse as sp

from bench.problems import gen_coupled2
from common.errors import InvalidKindError, InvalidLayoutError, NotAssembledError
from grid.local import distribute
from grid.structured import GridSpec, build_grid
from krylov.config import SolverConfig
from krylov.gmres import gmres
from linalg.layout import BlockLayout
from linalg.matrix import from_global_csr, gather_global_csr
from linalg.vector import DistVector
from partition.sfc_partition import partition_sfc
from precond.cpr import (PRESSURE_AMG, CprParams, CprPreconditioner, block_diagonal_scaling, cpr_apply,
                         cpr_setup, extract_pressure_block, prolong_pressure, restrict_pressure)
from precond.library import create_preconditioner
from runtime.index_map import build_block_map
from runtime.ranks import serial_context, spawn_ranks

EXACT_STAGES = {"ras": {"iluk_level": 40, "filter_tol": 0.0}, "amg": {"max_levels": 1}}


def laplacian_1d(n):
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)).tocsr()


def coupled_system(ctx, dims=(4, 3, 2), ordering="interleaved", coupling=0.1, contrast=10.0, seed=3):
    grid = build_grid(GridSpec(*dims))
    lgrid = distribute(grid, partition_sfc(grid, ctx.nprocs, "hilbert_nd", ctx), ctx)
    return gen_coupled2(lgrid, contrast, seed=seed, coupling=coupling, ordering=ordering)


def _pressure_block_program(ctx, ordering):
    A, _, layout = coupled_system(ctx, ordering=ordering)
    A_pp, rows = extract_pressure_block(A, layout)
    pressure_rows = np.concatenate(ctx.allgather(A.row_map.first + rows))
    full = gather_global_csr(A)
    expected = full[pressure_rows][:, pressure_rows]
    got = gather_global_csr(A_pp)
    return np.abs((got - expected).toarray()).max(), A_pp.shape[0], A.shape[0]


def _transfer_program(ctx):
    A, _, layout = coupled_system(ctx)
    data = cpr_setup(A, layout, "fpf")
    rng = np.random.default_rng(ctx.rank)
    p = DistVector(data.A_pp.row_map, rng.standard_normal(data.A_pp.nlocal), ctx)
    full = prolong_pressure(data, p)
    back = restrict_pressure(data, full)
    others = np.delete(full.owned, data.pressure_rows)
    return np.array_equal(back.owned, p.owned), bool(np.all(others == 0.0))


def _zero_program(ctx, variant):
    A, _, layout = coupled_system(ctx)
    data = cpr_setup(A, layout, variant)
    return bool(np.all(cpr_apply(data, A.create_vector()).owned == 0.0))


def _exact_program(ctx, variant):
    A, b, layout = coupled_system(ctx)
    data = cpr_setup(A, layout, variant, CprParams(variant=variant, **EXACT_STAGES))
    z = cpr_apply(data, b)
    handle = create_preconditioner(f"cpr-{variant}", layout=layout).assemble(A, EXACT_STAGES)
    _, report = gmres(A, b, config=SolverConfig(rtol=1e-8), precond=handle)
    return z.gather(), report.iterations


def _iterations_program(ctx, pc):
    A, b, layout = coupled_system(ctx, dims=(6, 6, 6), contrast=100.0)
    handle = create_preconditioner(pc, layout=layout).assemble(A, {})
    _, report = gmres(A, b, config=SolverConfig(rtol=1e-8), precond=handle)
    return report.iterations, report.converged


def _large_case_program(ctx, pc, maxit):
    A, b, layout = coupled_system(ctx, dims=(16, 16, 16), contrast=1e4, seed=0)
    handle = create_preconditioner(pc, layout=layout).assemble(A, {})
    _, report = gmres(A, b, config=SolverConfig(rtol=1e-8, maxit=maxit), precond=handle)
    return report.iterations, report.converged


def _linearity_program(ctx, variant):
    A, _, layout = coupled_system(ctx, dims=(5, 4, 3), contrast=1e3)
    handle = create_preconditioner(f"cpr-{variant}", layout=layout).assemble(A, {})
    rng = np.random.default_rng(11 + ctx.rank)
    x = DistVector(A.row_map, rng.standard_normal(A.nlocal), ctx)
    y = DistVector(A.row_map, rng.standard_normal(A.nlocal), ctx)
    combined = DistVector(A.row_map, 2.5 * x.owned - 0.75 * y.owned, ctx)
    lhs = handle.solve(combined).owned
    rhs = 2.5 * handle.solve(x).owned - 0.75 * handle.solve(y).owned
    return np.abs(lhs - rhs).max() / np.abs(rhs).max()


def _pressure_params_program(ctx):
    A, _, layout = coupled_system(ctx)
    data = cpr_setup(A, layout, "fp", CprParams(variant="fp", amg={"sweeps": 1}))
    return data.pressure_solver.hierarchy.params


def _decouple_program(ctx, ordering):
    A, _, layout = coupled_system(ctx, ordering=ordering)
    data = cpr_setup(A, layout, "fpf", CprParams(variant="fpf", decouple=True))
    blocks = block_diagonal_scaling(data.A, layout).toarray()
    return np.abs(blocks - np.eye(A.nlocal)).max()


class TestCprParams:
    def test_defaults(self):
        """Test default CPR parameters"""
        params = CprParams()
        assert params.variant == "fpf"
        assert params.decouple is False
        assert params.ras is None and params.amg is None

    def test_from_dict(self):
        """Test dict config"""
        params = CprParams.from_dict({"variant": "FFPF", "decouple": True, "amg": {"sweeps": 1}})
        assert params.variant == "ffpf"
        assert params.decouple is True
        assert params.amg == {"sweeps": 1}

    def test_invalid_variant(self):
        """Test unknown variants are rejected"""
        with pytest.raises(InvalidKindError):
            CprParams(variant="ppf")
        with pytest.raises(InvalidKindError):
            CprPreconditioner("fff")


class TestPressureBlock:
    def test_single_unknown(self):
        """Test one unknown per cell gives A_pp equal to A"""
        ctx = serial_context()
        A = from_global_csr(laplacian_1d(6), build_block_map(6, ctx), ctx)
        A_pp, rows = extract_pressure_block(A, BlockLayout(1, 0))
        assert rows.tolist() == list(range(6))
        assert np.array_equal(gather_global_csr(A_pp).toarray(), laplacian_1d(6).toarray())

    @pytest.mark.parametrize("nprocs", [1, 2])
    @pytest.mark.parametrize("ordering", ["interleaved", "segregated"])
    def test_matches_submatrix(self, nprocs, ordering):
        """Test A_pp equals the pressure rows and columns of A"""
        for diff, n_p, n in spawn_ranks(nprocs, _pressure_block_program, ordering):
            assert diff == 0.0
            assert n == 2 * n_p == 48

    def test_no_pressure_unknown(self):
        """Test a layout without pressure unknown is rejected"""
        ctx = serial_context()
        A = from_global_csr(laplacian_1d(6), build_block_map(6, ctx), ctx)
        with pytest.raises(InvalidLayoutError, match="no pressure unknown"):
            extract_pressure_block(A, BlockLayout(2, None))

    def test_rows_not_multiple(self):
        """Test owned rows must be a multiple of the unknowns per cell"""
        ctx = serial_context()
        A = from_global_csr(laplacian_1d(5), build_block_map(5, ctx), ctx)
        with pytest.raises(InvalidLayoutError, match="not a multiple"):
            extract_pressure_block(A, BlockLayout(2, 0))

    @pytest.mark.parametrize("nprocs", [1, 3])
    def test_restrict_prolong(self, nprocs):
        """Test restricting a prolonged pressure vector gives it back"""
        for same, zeros_elsewhere in spawn_ranks(nprocs, _transfer_program):
            assert same
            assert zeros_elsewhere


class TestCprApply:
    @pytest.mark.parametrize("variant", ["fp", "pf", "fpf", "ffpf"])
    def test_zero_residual(self, variant):
        """Test a zero input gives a zero output"""
        assert all(spawn_ranks(2, _zero_program, variant))

    @pytest.mark.parametrize("variant", ["fp", "fpf"])
    def test_exact_stages(self, variant):
        """Test exact full and pressure solves give A^{-1} f and one GMRES iteration"""
        z, iterations = spawn_ranks(1, _exact_program, variant)[0]
        assert np.allclose(z, 1.0, atol=1e-8)
        assert iterations == 1

    def test_fpf_beats_ras(self):
        """Test CPR-FPF needs no more iterations than RAS on the coupled system"""
        ras_its, ras_ok = spawn_ranks(2, _iterations_program, "ras")[0]
        cpr_its, cpr_ok = spawn_ranks(2, _iterations_program, "cpr-fpf")[0]
        assert ras_ok and cpr_ok
        assert cpr_its <= ras_its

    @pytest.mark.parametrize("nprocs", [1, 2])
    @pytest.mark.parametrize("variant", ["fp", "pf", "fpf", "ffpf"])
    def test_every_variant_converges_on_large_contrast(self, nprocs, variant):
        """Test all variants reach rtol 1e-8 within 100 iterations on 16^3, contrast 1e4"""
        iterations, converged = spawn_ranks(nprocs, _large_case_program, f"cpr-{variant}", 100)[0]
        assert converged
        assert iterations <= 100

    def test_fpf_beats_ras_on_large_contrast(self):
        """Test CPR-FPF needs no more iterations than RAS on 16^3, contrast 1e4"""
        ras_its, _ = spawn_ranks(2, _large_case_program, "ras", 200)[0]
        cpr_its, cpr_ok = spawn_ranks(2, _large_case_program, "cpr-fpf", 200)[0]
        assert cpr_ok
        assert cpr_its <= ras_its

    @pytest.mark.parametrize("variant", ["fp", "pf", "fpf", "ffpf"])
    def test_apply_is_linear(self, variant):
        """Test apply(a x + b y) equals a apply(x) + b apply(y)"""
        for rel in spawn_ranks(2, _linearity_program, variant):
            assert rel < 1e-10

    def test_pressure_stage_defaults(self):
        """Test the pressure AMG runs two symmetric cycles unless told otherwise"""
        params = spawn_ranks(1, _pressure_params_program)[0]
        assert params.maxit == PRESSURE_AMG["maxit"] == 2
        assert params.smoother == "gs-h-symmetric"
        assert params.sweeps == 1

    @pytest.mark.parametrize("ordering", ["interleaved", "segregated"])
    def test_decouple_gives_identity_blocks(self, ordering):
        """Test the scaled operator has identity diagonal blocks"""
        for diff in spawn_ranks(2, _decouple_program, ordering):
            assert diff < 1e-12


class TestCprHandle:
    def test_solve_before_assemble(self):
        """Test the handle refuses to solve before assemble"""
        handle = CprPreconditioner("fp", BlockLayout(2, 0))
        assert not handle.assembled
        with pytest.raises(NotAssembledError):
            handle.solve(None)

    def test_layout_from_params(self):
        """Test a layout passed at assemble time wins"""
        ctx = serial_context()
        A = from_global_csr(laplacian_1d(8), build_block_map(8, ctx), ctx)
        handle = CprPreconditioner("pf").assemble(A, {"layout": BlockLayout(2, 1)})
        assert handle.data.A_pp.shape == (4, 4)
        assert handle.data.pressure_rows.tolist() == [1, 3, 5, 7]
        handle.destroy()
        assert handle.data is None and not handle.assembled


if __name__ == "__main__":
    pytest.main([__file__])
