"""
Experiment drivers
Each experiment spawns a group of simulated ranks per np. Ranks meet at a
barrier at the end of every phase, so rank 0's phase times are those of the
slowest rank and they add up to its overall time.
"""

import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from bench.problems import ProblemSpec, build_problem, finish_problem
from bench.report import ExperimentReport
from common.errors import TooManyRanksError
from grid.local import distribute
from grid.structured import GridSpec, build_grid
from krylov.config import SolverConfig
from krylov.solve import krylov_solve
from linalg.matrix import spmv
from partition.quality import partition_quality
from partition.sfc_partition import partition_grid
from precond.library import create_preconditioner, normalize_kind
from reporting.run_logger import get_run_logger
from runtime.ranks import spawn_ranks

SOLVE_PHASES = ("gridding", "building", "assemble", "pc_setup", "solve", "overall")


class _PhaseTimer:
    def __init__(self, ctx):
        self.ctx = ctx
        self.times: Dict[str, float] = {}
        self._start = time.perf_counter()
        self._last = self._start

    def mark(self, phase: str):
        self.ctx.barrier()
        now = time.perf_counter()
        self.times[phase] = now - self._last
        self._last = now

    def finish(self) -> Dict[str, float]:
        self.times["overall"] = time.perf_counter() - self._start
        return self.times


def _phase_times(results: List[Dict[str, Any]], phases: Sequence[str]) -> Dict[str, float]:
    return {f"time_{p}": results[0]["times"].get(p, 0.0) for p in phases}


def _check_sizes(spec: ProblemSpec, np_list: Sequence[int]):
    ncells = spec.nx * spec.ny * spec.nz
    too_many = [n for n in np_list if n > ncells]
    if too_many:
        raise TooManyRanksError(f"np {too_many} exceeds the {ncells} grid cells")


def pc_params_for(kind: str, config: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Parameter dict a preconditioner kind expects, from the config tree"""
    config = config or {}
    kind = normalize_kind(kind)
    if kind == "ras":
        return dict(config.get("ras") or {})
    if kind == "amg":
        return dict(config.get("amg") or {})
    if kind.startswith("cpr_"):
        params = dict(config.get("cpr") or {})
        params["ras"] = dict(config.get("ras") or {})
        params["amg"] = {**(config.get("amg") or {}), **(params.get("amg") or {})}
        return params
    return {}


def _partition_program(ctx, grid, method: str):
    t0 = time.perf_counter()
    partition = partition_grid(grid, ctx.nprocs, method, ctx)
    elapsed = time.perf_counter() - t0
    row = None
    if ctx.rank == 0:
        row = partition_quality(grid, partition).as_row()
    return {"row": row, "times": {"partition": elapsed}}


def run_partition_experiment(spec: ProblemSpec, methods: Sequence[str],
                             np_list: Sequence[int]) -> ExperimentReport:
    """Quality metrics of every (method, np) pair"""
    _check_sizes(spec, np_list)
    logger = get_run_logger()
    report = ExperimentReport("partition", meta={"problem": spec.to_dict(), "methods": list(methods),
                                                 "np_list": list(np_list)})
    grid = build_grid(GridSpec(spec.nx, spec.ny, spec.nz))
    for nprocs in np_list:
        for method in methods:
            logger.log_system(f"🚀 partition {method} on {nprocs} ranks")
            results = spawn_ranks(nprocs, _partition_program, grid, method)
            row = {"method": method, "np": nprocs}
            row.update(results[0]["row"])
            row.update(_phase_times(results, ("partition",)))
            report.add_row(row)
    return report


def _solve_program(ctx, spec: ProblemSpec, solver: SolverConfig, pc: str,
                   pc_params: Dict[str, Any], method: str):
    timer = _PhaseTimer(ctx)
    grid = build_grid(GridSpec(spec.nx, spec.ny, spec.nz))
    partition = partition_grid(grid, ctx.nprocs, method, ctx)
    lgrid = distribute(grid, partition, ctx)
    timer.mark("gridding")
    A, _, layout = build_problem(spec, lgrid, assemble=False)
    timer.mark("building")
    b = finish_problem(A)
    timer.mark("assemble")
    precond = create_preconditioner(pc, layout=layout)
    precond.assemble(A, pc_params)
    timer.mark("pc_setup")
    x, report = krylov_solve(A, b, None, solver, precond)
    timer.mark("solve")
    times = timer.finish()
    error = float(ctx.allreduce_max(float(np.max(np.abs(x.owned - 1.0))) if A.nlocal else 0.0))
    precond.destroy()
    return {"report": report, "error": error, "times": times, "nnz": ctx.allreduce_sum(int(A.local.nnz))}


def run_solver_experiment(spec: ProblemSpec, solver: SolverConfig, pc: str, np_list: Sequence[int],
                          pc_config: Optional[Dict[str, Any]] = None,
                          partition_method: str = "hsfc") -> ExperimentReport:
    """One linear solve per np; non-convergence is recorded, not raised"""
    _check_sizes(spec, np_list)
    logger = get_run_logger()
    pc_params = pc_params_for(pc, pc_config)
    report = ExperimentReport("solver", meta={"problem": spec.to_dict(), "solver": solver.to_dict(),
                                              "pc": pc, "pc_params": pc_params,
                                              "partition": partition_method})
    base_time = None
    for nprocs in np_list:
        logger.log_system(f"🚀 {solver.method} + {pc} on {spec.kind} {spec.dims}, {nprocs} ranks")
        results = spawn_ranks(nprocs, _solve_program, spec, solver, pc, pc_params, partition_method)
        first = results[0]
        solve_report = first["report"]
        timings = _phase_times(results, SOLVE_PHASES)
        if base_time is None:
            base_time = timings["time_overall"]
        steps = 1
        row = {
            "problem": spec.kind, "nx": spec.nx, "ny": spec.ny, "nz": spec.nz,
            "np": nprocs, "solver": solver.method, "pc": pc, "nnz": first["nnz"],
            "steps": steps,
            "iterations": solve_report.iterations,
            "avg_iterations": solve_report.iterations / steps,
            "converged": solve_report.converged,
            "stop_reason": solve_report.stop_reason,
            "final_residual": solve_report.final_residual,
            "error_inf": first["error"],
        }
        row.update(timings)
        row["time_avg"] = timings["time_solve"] / steps
        row["speedup"] = base_time / timings["time_overall"] if timings["time_overall"] > 0 else 1.0
        report.add_row(row)
        report.add_history(f"{normalize_kind(pc)}-np{nprocs}", solve_report.residual_history)
    return report


def _spmv_program(ctx, spec: ProblemSpec, repeats: int, method: str):
    grid = build_grid(GridSpec(spec.nx, spec.ny, spec.nz))
    partition = partition_grid(grid, ctx.nprocs, method, ctx)
    lgrid = distribute(grid, partition, ctx)
    A, _, _ = build_problem(spec, lgrid)
    x = A.column_vector(np.ones(A.nlocal))
    y = A.create_vector()
    ctx.barrier()
    t0 = time.perf_counter()
    for _ in range(repeats):
        spmv(1.0, A, x, 0.0, y)
    ctx.barrier()
    elapsed = time.perf_counter() - t0
    return {"times": {"spmv": elapsed / repeats}, "nnz": ctx.allreduce_sum(int(A.local.nnz))}


def run_spmv_experiment(spec: ProblemSpec, np_list: Sequence[int], repeats: int = 20,
                        partition_method: str = "hsfc") -> ExperimentReport:
    """Time per distributed SpMV on the generated matrix"""
    _check_sizes(spec, np_list)
    report = ExperimentReport("spmv", meta={"problem": spec.to_dict(), "repeats": repeats,
                                            "partition": partition_method})
    base_time = None
    for nprocs in np_list:
        get_run_logger().log_system(f"🚀 spmv on {spec.kind} {spec.dims}, {nprocs} ranks")
        results = spawn_ranks(nprocs, _spmv_program, spec, repeats, partition_method)
        timings = _phase_times(results, ("spmv",))
        if base_time is None:
            base_time = timings["time_spmv"]
        row = {"problem": spec.kind, "np": nprocs, "nnz": results[0]["nnz"], "repeats": repeats}
        row.update(timings)
        row["speedup"] = base_time / timings["time_spmv"] if timings["time_spmv"] > 0 else 1.0
        report.add_row(row)
    return report
