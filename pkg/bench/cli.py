#!/usr/bin/env python3
"""
bench command line
    python -m bench partition --nx 16 --ny 16 --nz 1 --np-list 2,4,8 --methods hsfc,morton,block
    python -m bench solve --problem hetero --nx 10 --ny 10 --nz 10 --np 4 --pc cpr-fpf
    python -m bench spmv --nx 20 --ny 20 --nz 20 --np-list 1,2,4

Exit code 0 on success, 2 when a solve did not converge, 1 on error.
"""

import argparse
import copy
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

from bench.experiments import run_partition_experiment, run_solver_experiment, run_spmv_experiment
from bench.problems import ProblemSpec
from common.errors import PlatformError
from krylov.config import SolverConfig
from reporting.run_logger import get_run_logger

DEFAULT_CONFIG = Path(__file__).parent / "config.yaml"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

# flag destination -> (config section, key)
FLAG_KEYS = {
    "problem": ("problem", "kind"),
    "nx": ("problem", "nx"),
    "ny": ("problem", "ny"),
    "nz": ("problem", "nz"),
    "contrast": ("problem", "contrast"),
    "seed": ("problem", "seed"),
    "coupling": ("problem", "coupling"),
    "ordering": ("problem", "ordering"),
    "solver": ("solver", "method"),
    "rtol": ("solver", "rtol"),
    "atol": ("solver", "atol"),
    "btol": ("solver", "btol"),
    "maxit": ("solver", "maxit"),
    "restart": ("solver", "restart"),
    "overlap": ("ras", "overlap"),
    "ilu": ("ras", "solver"),
    "iluk_level": ("ras", "iluk_level"),
    "ilut_p": ("ras", "ilut_p"),
    "ilut_tol": ("ras", "ilut_tol"),
    "filter_tol": ("ras", "filter_tol"),
    "amg_levels": ("amg", "max_levels"),
    "amg_strength": ("amg", "strength"),
    "amg_max_row_sum": ("amg", "max_row_sum"),
    "amg_sweeps": ("amg", "sweeps"),
    "decouple": ("cpr", "decouple"),
    "partition": ("partition", "method"),
    "repeats": ("spmv", "repeats"),
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Packaged defaults, then BENCH_CONFIG (or path) on top"""
    load_dotenv()
    with open(DEFAULT_CONFIG, "r") as f:
        config = yaml.safe_load(f) or {}
    path = path or os.getenv("BENCH_CONFIG")
    if path:
        if not Path(path).exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        with open(path, "r") as f:
            config = _merge(config, yaml.safe_load(f) or {})
    return config


def apply_flags(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """Flags given on the command line override the config tree"""
    config = copy.deepcopy(config)
    for dest, (section, key) in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            config.setdefault(section, {})[key] = value
    if getattr(args, "pc", None) is not None:
        config["pc"] = args.pc
    return config


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_problem_flags(p: argparse.ArgumentParser):
    p.add_argument("--problem", type=str, default=None, help="poisson3d | hetero | coupled2")
    p.add_argument("--nx", type=int, default=None, help="cells in x")
    p.add_argument("--ny", type=int, default=None, help="cells in y")
    p.add_argument("--nz", type=int, default=None, help="cells in z")
    p.add_argument("--contrast", type=float, default=None, help="permeability contrast")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--coupling", type=float, default=None, help="coupled2 in-cell coupling scale")
    p.add_argument("--ordering", type=str, default=None, help="coupled2 unknown ordering")
    p.add_argument("--partition", type=str, default=None, help="partition method")
    p.add_argument("--config", type=str, default=None, help="YAML config file")
    p.add_argument("--out", type=str, default=None, help="CSV report path")
    p.add_argument("--json", type=str, default=None, help="JSON report path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Partition, solver and SpMV experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    part = sub.add_parser("partition", help="partition quality table")
    _add_problem_flags(part)
    part.add_argument("--np-list", type=_int_list, default=None, help="comma separated rank counts")
    part.add_argument("--methods", type=_str_list, default=None, help="e.g. hsfc,morton,block")

    solve = sub.add_parser("solve", help="one linear solve per rank count")
    _add_problem_flags(solve)
    solve.add_argument("--np", type=_int_list, default=None, help="rank count(s), comma separated")
    solve.add_argument("--solver", type=str, default=None, help="gmres | bicgstab")
    solve.add_argument("--pc", type=str, default=None,
                       help="none | ras | amg | cpr-fp | cpr-pf | cpr-fpf | cpr-ffpf")
    solve.add_argument("--rtol", type=float, default=None, help="relative tolerance")
    solve.add_argument("--atol", type=float, default=None, help="absolute tolerance")
    solve.add_argument("--btol", type=float, default=None, help="tolerance relative to ||b||")
    solve.add_argument("--maxit", type=int, default=None, help="max iterations")
    solve.add_argument("--restart", type=int, default=None, help="GMRES restart length")
    solve.add_argument("--overlap", type=int, default=None, help="RAS overlap")
    solve.add_argument("--ilu", type=str, default=None, help="ilu0 | iluk | ilut")
    solve.add_argument("--iluk-level", type=int, default=None, help="ILU(k) fill level")
    solve.add_argument("--ilut-p", type=int, default=None, help="ILUT extra entries per row, -1 unlimited")
    solve.add_argument("--ilut-tol", type=float, default=None, help="ILUT drop tolerance")
    solve.add_argument("--filter-tol", type=float, default=None, help="RAS filter tolerance")
    solve.add_argument("--amg-levels", type=int, default=None, help="AMG max levels")
    solve.add_argument("--amg-strength", type=float, default=None, help="AMG strength threshold")
    solve.add_argument("--amg-max-row-sum", type=float, default=None, help="AMG max row sum")
    solve.add_argument("--amg-sweeps", type=int, default=None, help="AMG smoothing sweeps")
    solve.add_argument("--decouple", action="store_const", const=True, default=None,
                       help="CPR block-diagonal scaling")
    solve.add_argument("--history-dir", type=str, default=None, help="write residual histories here")

    spmv = sub.add_parser("spmv", help="time per distributed SpMV")
    _add_problem_flags(spmv)
    spmv.add_argument("--np-list", type=_int_list, default=None, help="comma separated rank counts")
    spmv.add_argument("--repeats", type=int, default=None, help="products per timing")
    return parser


def _emit(report, args) -> None:
    df = report.to_frame()
    print(df.to_string(index=False))
    if args.out:
        report.to_csv(args.out)
        print(f"✅ CSV written to {args.out}")
    if args.json:
        report.to_json(args.json)
        print(f"✅ JSON written to {args.json}")


def run_command(args: argparse.Namespace) -> int:
    config = apply_flags(load_config(args.config), args)
    spec = ProblemSpec.from_dict(config.get("problem"))
    part_cfg = config.get("partition", {})

    if args.command == "partition":
        np_list = args.np_list or part_cfg.get("np_list", [1])
        methods = args.methods or part_cfg.get("methods", ["hsfc"])
        report = run_partition_experiment(spec, methods, np_list)
        _emit(report, args)
        return EXIT_OK

    if args.command == "spmv":
        np_list = args.np_list or part_cfg.get("np_list", [1])
        report = run_spmv_experiment(spec, np_list, int(config.get("spmv", {}).get("repeats", 20)),
                                     part_cfg.get("method", "hsfc"))
        _emit(report, args)
        return EXIT_OK

    solver = SolverConfig.from_dict(config.get("solver"))
    np_list = args.np or [1]
    report = run_solver_experiment(spec, solver, config.get("pc", "ras"), np_list, config,
                                   part_cfg.get("method", "hsfc"))
    _emit(report, args)
    if args.history_dir:
        for path in report.write_histories(args.history_dir):
            print(f"✅ history written to {path}")
    if not all(row["converged"] for row in report.rows):
        print("⚠️ solver did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point"""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors must not look like a non-converged solve
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logger = get_run_logger()
    logger.echo = True
    logger.start_run(f"bench {args.command}")
    try:
        return run_command(args)
    except (PlatformError, ValueError, OSError) as exc:
        print(f"❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        logger.echo = False


if __name__ == "__main__":
    sys.exit(main())
