#!/usr/bin/env python3
"""
Preconditioner library
Registers preconditioner factories by kind and hands out fresh handles
"""

from typing import Any, Callable, Dict, List, Optional

from common.errors import InvalidArgumentError, InvalidKindError
from precond.amg import AmgPreconditioner
from precond.base import IdentityPreconditioner, Preconditioner, UserPreconditioner
from precond.cpr import CprPreconditioner
from precond.ras import RasPreconditioner


def normalize_kind(kind: str) -> str:
    """'cpr-fpf', 'CPR_FPF' -> 'cpr_fpf'"""
    return str(kind).strip().lower().replace("-", "_")


class PreconditionerLibrary:
    """Factory registry for preconditioner kinds"""

    def __init__(self):
        self._factories: Dict[str, Callable[..., Preconditioner]] = {}
        self._register_default_kinds()

    def _register_default_kinds(self):
        """Register the built-in kinds"""
        self._factories["none"] = lambda **_: IdentityPreconditioner()
        self._factories["ras"] = lambda **_: RasPreconditioner()
        self._factories["amg"] = lambda **_: AmgPreconditioner()
        for variant in ("fp", "pf", "fpf", "ffpf"):
            self._factories[f"cpr_{variant}"] = (
                lambda v=variant, layout=None, full_solver=None, pressure_solver=None, **_:
                CprPreconditioner(v, layout, full_solver, pressure_solver)
            )
        self._factories["user"] = lambda solve_fn=None, assemble_fn=None, destroy_fn=None, **_: \
            UserPreconditioner(solve_fn, assemble_fn, destroy_fn)

    def register_kind(self, kind: str, factory: Callable[..., Preconditioner]) -> None:
        """Register a new kind"""
        self._factories[normalize_kind(kind)] = factory

    def create(self, kind: str, **options: Any) -> Preconditioner:
        name = normalize_kind(kind)
        factory = self._factories.get(name)
        if factory is None:
            raise InvalidKindError(f"Unknown preconditioner kind: {kind}")
        if name == "user" and options.get("solve_fn") is None:
            raise InvalidArgumentError("user preconditioner needs a solve_fn callback")
        return factory(**options)

    def get_kind_names(self) -> List[str]:
        return list(self._factories.keys())

    def validate_kind(self, kind: str) -> bool:
        return normalize_kind(kind) in self._factories

    def get_kind_info(self, kind: str) -> Optional[Dict[str, Any]]:
        """Name and default parameters of a kind"""
        if not self.validate_kind(kind):
            return None
        handle = self.create(kind, solve_fn=lambda state, r: r)
        return {"name": handle.name, "default_params": handle.default_params,
                "description": (type(handle).__doc__ or "").strip()}


# Global library instance
_preconditioner_library = None


def get_preconditioner_library() -> PreconditionerLibrary:
    """Get the global preconditioner library"""
    global _preconditioner_library
    if _preconditioner_library is None:
        _preconditioner_library = PreconditionerLibrary()
    return _preconditioner_library


def create_preconditioner(kind: str, **options: Any) -> Preconditioner:
    """Fresh, unassembled handle of the given kind"""
    return get_preconditioner_library().create(kind, **options)
