"""
Solver configuration and the report every Krylov solve returns
"""

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from common.errors import InvalidArgumentError, MapMismatchError, NotAssembledError
from linalg.vector import DistVector

METHODS = ("gmres", "bicgstab")
STOP_REASONS = ("rtol", "atol", "btol", "maxit", "breakdown")
BREAKDOWN = 1e-300


@dataclass
class SolverConfig:
    """Krylov solver parameters"""
    method: str = "gmres"
    rtol: float = 1e-6
    atol: float = 1e-50
    btol: float = 0.0  # 0 disables the ||b|| relative test
    maxit: int = 1000
    restart: int = 30

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise InvalidArgumentError(f"Unknown solver: {self.method}")
        if min(self.rtol, self.atol, self.btol) < 0:
            raise InvalidArgumentError("tolerances must be >= 0")
        if self.restart < 1:
            raise InvalidArgumentError(f"restart must be >= 1, got {self.restart}")
        if self.maxit < 0:
            raise InvalidArgumentError(f"maxit must be >= 0, got {self.maxit}")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "SolverConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (data or {}).items() if k in names})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def tolerance(self, r0: float, bnorm: float) -> float:
        return max(self.rtol * r0, self.btol * bnorm, self.atol)

    def stop_reason(self, res: float, r0: float, bnorm: float) -> Optional[str]:
        """First satisfied criterion, None when none holds"""
        if res <= self.rtol * r0:
            return "rtol"
        if self.btol > 0 and res <= self.btol * bnorm:
            return "btol"
        if res <= self.atol:
            return "atol"
        return None


@dataclass
class SolveReport:
    method: str
    iterations: int
    final_residual: float
    converged: bool
    stop_reason: str
    residual_history: List[float] = field(default_factory=list)

    def history_frame(self) -> pd.DataFrame:
        """Residual history as (iteration, residual) rows"""
        return pd.DataFrame({
            "iteration": np.arange(len(self.residual_history)),
            "residual": np.asarray(self.residual_history, dtype=float),
        })

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
        }


def check_system(A, b: DistVector):
    if not A.assembled:
        raise NotAssembledError("solver called on an unassembled matrix")
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"solver needs a square matrix, got {A.shape}")
    if not b.map.same_layout(A.row_map):
        raise MapMismatchError("right-hand side does not match the matrix rows")


def initial_guess(A, x0: Optional[DistVector]) -> DistVector:
    if x0 is None:
        return DistVector(A.row_map, None, A.ctx)
    if not x0.map.same_layout(A.row_map):
        raise MapMismatchError("initial guess does not match the matrix rows")
    return DistVector(A.row_map, x0.owned.copy(), A.ctx)


def apply_pc(precond, A, values: np.ndarray) -> np.ndarray:
    """M^{-1} v on owned values; identity when precond is None"""
    if precond is None:
        return values.copy()
    return np.asarray(precond.solve(DistVector(A.row_map, values.copy(), A.ctx)).owned, dtype=float)


def apply_matrix(A, values: np.ndarray) -> np.ndarray:
    return A.local @ A.exchanged_columns(values)


def global_norm(values: np.ndarray, ctx) -> float:
    return float(np.sqrt(global_dot(values, values, ctx)))


def global_dot(a: np.ndarray, b: np.ndarray, ctx) -> float:
    """Correctly rounded dot product of owned values over all ranks"""
    return float(ctx.allreduce_fsum(a * b))
