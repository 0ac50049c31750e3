"""
Solver dispatch by SolverConfig.method
"""

from typing import Optional, Tuple

from krylov.bicgstab import bicgstab
from krylov.config import SolveReport, SolverConfig
from krylov.gmres import gmres
from linalg.vector import DistVector

SOLVERS = {
    "gmres": gmres,
    "bicgstab": bicgstab,
}


def krylov_solve(A, b: DistVector, x0: Optional[DistVector] = None,
                 config: Optional[SolverConfig] = None, precond=None) -> Tuple[DistVector, SolveReport]:
    config = config or SolverConfig()
    return SOLVERS[config.method](A, b, x0, config, precond)
