import json

import numpy as np
import pandas as pd
import pytest

from bench.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, load_config, main
from bench.experiments import (pc_params_for, run_partition_experiment, run_solver_experiment,
                               run_spmv_experiment)
from bench.problems import (ProblemSpec, build_problem, gen_coupled2, gen_hetero_pressure, gen_poisson3d,
                            permeability_field)
from bench.report import SCHEMA_VERSION, ExperimentReport
from common.errors import InvalidArgumentError, TooManyRanksError
from grid.local import distribute
from grid.structured import GridSpec, build_grid
from krylov.config import SolverConfig
from linalg.matrix import gather_global_csr
from partition.sfc_partition import partition_sfc
from runtime.ranks import serial_context, spawn_ranks


def serial_grid(nx, ny, nz):
    ctx = serial_context()
    grid = build_grid(GridSpec(nx, ny, nz))
    return distribute(grid, partition_sfc(grid, 1, "hilbert_nd", ctx), ctx)


def _global_problem(ctx, spec):
    grid = build_grid(GridSpec(spec.nx, spec.ny, spec.nz))
    lgrid = distribute(grid, partition_sfc(grid, ctx.nprocs, "hilbert_nd", ctx), ctx)
    A, b, layout = build_problem(spec, lgrid)
    return gather_global_csr(A), b.gather(), layout


class TestProblemSpec:
    def test_aliases(self):
        """Test short problem names"""
        assert ProblemSpec(kind="poisson").kind == "poisson3d"
        assert ProblemSpec(kind="hetero").kind == "hetero_pressure"
        spec = ProblemSpec(kind="coupled")
        assert spec.kind == "coupled2"
        assert spec.unknowns_per_cell == 2

    def test_from_dict(self):
        """Test dims key and unknown keys"""
        spec = ProblemSpec.from_dict({"kind": "hetero", "dims": [4, 5, 6], "contrast": 100.0, "color": "red"})
        assert spec.dims == (4, 5, 6)
        assert spec.contrast == 100.0
        assert spec.to_dict()["nz"] == 6

    def test_invalid(self):
        """Test invalid problem parameters"""
        with pytest.raises(InvalidArgumentError, match="Unknown problem"):
            ProblemSpec(kind="navier_stokes")
        with pytest.raises(InvalidArgumentError, match="contrast"):
            ProblemSpec(contrast=0.5)
        with pytest.raises(InvalidArgumentError, match="coupling"):
            ProblemSpec(coupling=-0.1)
        with pytest.raises(InvalidArgumentError):
            ProblemSpec(nx=0)


class TestProblems:
    def test_single_cell(self):
        """Test the 1x1x1 Poisson matrix is [12]"""
        A, b = gen_poisson3d(serial_grid(1, 1, 1))
        assert gather_global_csr(A).toarray().tolist() == [[12.0]]
        assert b.owned.tolist() == [12.0]

    def test_interior_row_sum(self):
        """Test the interior cell of a 3x3x3 grid has a zero row sum"""
        A, _ = gen_poisson3d(serial_grid(3, 3, 3))
        full = gather_global_csr(A)
        counts = np.diff(full.indptr)
        interior = int(np.flatnonzero(counts == 7)[0])
        assert np.count_nonzero(counts == 7) == 1
        assert full[interior].sum() == pytest.approx(0.0, abs=1e-12)
        assert np.all(full.diagonal() > 0)

    def test_contrast_one_is_poisson(self):
        """Test contrast 1 gives the Poisson matrix"""
        lgrid = serial_grid(4, 3, 2)
        A, _ = gen_poisson3d(lgrid)
        H, _ = gen_hetero_pressure(lgrid, 1.0, seed=5)
        assert np.allclose(gather_global_csr(A).toarray(), gather_global_csr(H).toarray(), atol=1e-14)

    def test_hetero_symmetric(self):
        """Test the heterogeneous operator is symmetric"""
        H, _ = gen_hetero_pressure(serial_grid(4, 4, 4), 1e4, seed=1)
        full = gather_global_csr(H)
        assert abs(full - full.T).max() < 1e-10 * abs(full).max()

    def test_permeability_field(self):
        """Test seeded field range and reproducibility"""
        perm = permeability_field(1000, 1e4, 3)
        assert np.array_equal(perm, permeability_field(1000, 1e4, 3))
        assert np.all(perm > 0)
        assert perm.max() / perm.min() > 10.0
        assert np.all(permeability_field(10, 1.0, 3) == 1.0)

    def test_coupled_rhs(self):
        """Test the coupled system has b = A * 1 and pressure unknown 0"""
        A, b, layout = gen_coupled2(serial_grid(3, 2, 2), 10.0, seed=2, ordering="segregated")
        assert layout.unknowns_per_cell == 2 and layout.pressure_unknown == 0
        assert layout.ordering == "segregated"
        full = gather_global_csr(A)
        assert full.shape == (24, 24)
        assert np.allclose(full @ np.ones(24), b.owned)

    @pytest.mark.parametrize("nprocs", [2, 3])
    def test_rank_count_independent(self, nprocs):
        """Test the generated system does not depend on the rank count up to row order"""
        spec = ProblemSpec(kind="hetero", nx=4, ny=3, nz=3, contrast=100.0, seed=2)
        serial, b1, _ = spawn_ranks(1, _global_problem, spec)[0]
        parallel, b2, _ = spawn_ranks(nprocs, _global_problem, spec)[0]
        assert serial.nnz == parallel.nnz
        assert np.allclose(np.sort(serial.diagonal()), np.sort(parallel.diagonal()))
        assert b1.sum() == pytest.approx(b2.sum())


class TestExperiments:
    def test_partition_table(self):
        """Test one row per method with every quality metric"""
        report = run_partition_experiment(ProblemSpec(nx=8, ny=8, nz=8), ["hsfc", "morton", "block"], [4])
        df = report.to_frame()
        assert len(df) == 3
        assert df["method"].tolist() == ["hsfc", "morton", "block"]
        for column in ("f_p", "r_max", "r_global", "r_avg", "c", "time_partition"):
            assert column in df.columns
        assert (df["f_p"] == 1.0).all()

    def test_solver_rows(self):
        """Test solver rows, histories and speedup"""
        spec = ProblemSpec(nx=6, ny=6, nz=6)
        report = run_solver_experiment(spec, SolverConfig(rtol=1e-8), "ras", [1, 2])
        df = report.to_frame()
        assert df["np"].tolist() == [1, 2]
        assert df["converged"].all()
        assert (df["error_inf"] < 1e-5).all()
        assert df["speedup"].iloc[0] == 1.0
        assert df["nnz"].nunique() == 1
        assert set(report.histories) == {"ras-np1", "ras-np2"}
        assert len(report.histories["ras-np1"]) == df["iterations"].iloc[0] + 1

    def test_cpr_solver_row(self):
        """Test CPR-FPF on the coupled problem"""
        spec = ProblemSpec(kind="coupled", nx=4, ny=4, nz=4, contrast=10.0)
        config = {"amg": {"coarse_size": 16}}
        report = run_solver_experiment(spec, SolverConfig(method="bicgstab"), "cpr-fpf", [2], config)
        row = report.rows[0]
        assert row["converged"]
        assert row["pc"] == "cpr-fpf"
        assert "cpr_fpf-np2" in report.histories

    def test_spmv_rows(self):
        """Test SpMV timing rows"""
        report = run_spmv_experiment(ProblemSpec(nx=5, ny=5, nz=5), [1, 2], repeats=3)
        df = report.to_frame()
        assert df["np"].tolist() == [1, 2]
        assert (df["time_spmv"] > 0).all()
        assert df["nnz"].tolist() == [5 ** 3 + 6 * 5 * 5 * 4] * 2

    def test_too_many_ranks(self):
        """Test more ranks than cells is refused"""
        with pytest.raises(TooManyRanksError):
            run_partition_experiment(ProblemSpec(nx=2, ny=1, nz=1), ["hsfc"], [4])

    def test_pc_params(self):
        """Test parameter sections per preconditioner kind"""
        config = {"ras": {"overlap": 2}, "amg": {"sweeps": 1}, "cpr": {"decouple": True}}
        assert pc_params_for("ras", config) == {"overlap": 2}
        assert pc_params_for("amg", config) == {"sweeps": 1}
        cpr = pc_params_for("cpr-fp", config)
        assert cpr["decouple"] is True and cpr["ras"] == {"overlap": 2}
        assert cpr["amg"] == {"sweeps": 1}
        config["cpr"]["amg"] = {"maxit": 2, "sweeps": 3}
        assert pc_params_for("cpr-pf", config)["amg"] == {"sweeps": 3, "maxit": 2}
        assert pc_params_for("none", config) == {}


class TestExperimentReport:
    def setup_method(self):
        self.report = ExperimentReport("solver", meta={"np_list": [1, 2]})
        self.report.add_row({"np": np.int64(1), "iterations": 7, "time_solve": 0.5, "speedup": 1.0})
        self.report.add_history("ras-np1", [1.0, 0.1, np.float64(0.01)])

    def test_json_round_trip(self, tmp_path):
        """Test JSON string and file round trips"""
        back = ExperimentReport.from_json(self.report.to_json())
        assert back.rows == self.report.rows
        assert back.histories == {"ras-np1": [1.0, 0.1, 0.01]}
        path = tmp_path / "out" / "report.json"
        self.report.to_json(str(path))
        assert ExperimentReport.from_json(str(path)).kind == "solver"

    def test_schema_mismatch(self):
        """Test unknown schema versions are rejected"""
        data = json.loads(self.report.to_json())
        data["schema_version"] = SCHEMA_VERSION + 1
        with pytest.raises(ValueError, match="schema"):
            ExperimentReport.from_json(json.dumps(data))

    def test_timing_columns(self):
        """Test timing columns are recognised"""
        assert set(self.report.timing_columns()) == {"time_solve", "speedup"}

    def test_write_histories(self, tmp_path):
        """Test one history CSV per key"""
        paths = self.report.write_histories(str(tmp_path))
        assert paths == [str(tmp_path / "history_ras-np1.csv")]
        df = pd.read_csv(paths[0])
        assert df.columns.tolist() == ["iteration", "residual"]
        assert df["iteration"].tolist() == [0, 1, 2]


class TestCli:
    def test_help(self, capsys):
        """Test --help exits cleanly"""
        assert main(["--help"]) == EXIT_OK
        assert "partition" in capsys.readouterr().out

    def test_bad_flag(self):
        """Test usage errors return 1"""
        assert main(["solve", "--bogus"]) == EXIT_ERROR
        assert main([]) == EXIT_ERROR

    def test_invalid_value(self):
        """Test a bad problem name is an error, not a crash"""
        assert main(["partition", "--problem", "unknown", "--np-list", "1"]) == EXIT_ERROR

    def test_partition_csv(self, tmp_path):
        """Test the partition table written as CSV"""
        out = tmp_path / "part.csv"
        code = main(["partition", "--nx", "8", "--ny", "8", "--nz", "1", "--np-list", "2,4",
                     "--methods", "hsfc,block", "--out", str(out)])
        assert code == EXIT_OK
        df = pd.read_csv(out)
        assert len(df) == 4
        assert df["method"].tolist() == ["hsfc", "block", "hsfc", "block"]

    def test_not_converged(self):
        """Test a solve stopped by maxit returns 2"""
        code = main(["solve", "--nx", "6", "--ny", "6", "--nz", "6", "--pc", "none", "--maxit", "1"])
        assert code == EXIT_NOT_CONVERGED

    def test_solve_json_and_histories(self, tmp_path):
        """Test JSON report and history files of a solve"""
        out = tmp_path / "solve.json"
        code = main(["solve", "--problem", "hetero", "--nx", "5", "--ny", "5", "--nz", "5",
                     "--contrast", "100", "--np", "1,2", "--pc", "cpr-fpf",
                     "--json", str(out), "--history-dir", str(tmp_path / "hist")])
        assert code == EXIT_OK
        report = ExperimentReport.from_json(str(out))
        assert report.kind == "solver"
        assert [row["np"] for row in report.rows] == [1, 2]
        assert (tmp_path / "hist" / "history_cpr_fpf-np2.csv").exists()

    def test_deterministic_apart_from_timing(self, tmp_path):
        """Test repeated runs give identical reports once timing columns are dropped"""
        frames = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert main(["solve", "--nx", "5", "--ny", "5", "--nz", "5", "--np", "3",
                         "--solver", "bicgstab", "--out", str(out)]) == EXIT_OK
            frames.append(pd.read_csv(out))
        timing = [c for c in frames[0].columns if c.startswith("time_") or c == "speedup"]
        pd.testing.assert_frame_equal(frames[0].drop(columns=timing), frames[1].drop(columns=timing))

    def test_config_from_env(self, tmp_path, monkeypatch):
        """Test BENCH_CONFIG overrides the packaged defaults"""
        path = tmp_path / "bench.yaml"
        path.write_text("problem:\n  nx: 3\nras:\n  overlap: 2\n")
        monkeypatch.setenv("BENCH_CONFIG", str(path))
        config = load_config()
        assert config["problem"]["nx"] == 3
        assert config["problem"]["ny"] == 10
        assert config["ras"]["overlap"] == 2
        assert config["ras"]["solver"] == "iluk"

    def test_missing_config(self):
        """Test a missing config path"""
        with pytest.raises(FileNotFoundError):
            load_config("nonexistent.yaml")


if __name__ == "__main__":
    pytest.main([__file__])
