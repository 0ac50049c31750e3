"""
Preconditioner protocol
Every preconditioner is assembled on a matrix, then solves M z = r
"""

from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, Optional

from common.errors import NotAssembledError
from linalg.vector import DistVector


class Preconditioner(ABC):
    """Base class: assemble / solve / destroy"""

    def __init__(self, name: str, default_params: Optional[Dict[str, Any]] = None):
        self.name = name
        self.default_params = default_params or {}
        self.matrix = None

    def get_params(self, params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Merge default and given parameters"""
        merged = self.default_params.copy()
        if params:
            merged.update(params)
        return merged

    @abstractmethod
    def assemble(self, A, params: Optional[Dict[str, Any]] = None) -> "Preconditioner":
        raise NotImplementedError

    @abstractmethod
    def solve(self, r: DistVector) -> DistVector:
        """Approximate A^{-1} r; r is not modified"""
        raise NotImplementedError

    def destroy(self):
        self.matrix = None

    @property
    def assembled(self) -> bool:
        return self.matrix is not None

    def _require_assembled(self):
        if self.matrix is None:
            raise NotAssembledError(f"preconditioner {self.name} used before assemble")


class IdentityPreconditioner(Preconditioner):
    """No preconditioning"""

    def __init__(self):
        super().__init__("none", {})

    def assemble(self, A, params=None):
        self.matrix = A
        return self

    def solve(self, r):
        return r.copy()


class UserPreconditioner(Preconditioner):
    """Wraps externally supplied callbacks.

    assemble_fn(A, params) may return any state object; solve_fn(state, r)
    returns the preconditioned vector (DistVector or owned values).
    """

    def __init__(self, solve_fn: Callable, assemble_fn: Optional[Callable] = None,
                 destroy_fn: Optional[Callable] = None):
        super().__init__("user", {})
        self.solve_fn = solve_fn
        self.assemble_fn = assemble_fn
        self.destroy_fn = destroy_fn
        self.state = None

    def assemble(self, A, params=None):
        self.matrix = A
        if self.assemble_fn is not None:
            self.state = self.assemble_fn(A, self.get_params(params))
        return self

    def solve(self, r):
        self._require_assembled()
        out = self.solve_fn(self.state, r)
        if isinstance(out, DistVector):
            return out
        return DistVector(r.map, out, r.ctx)

    def destroy(self):
        if self.destroy_fn is not None:
            self.destroy_fn(self.state)
        self.state = None
        super().destroy()
