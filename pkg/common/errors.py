"""
Error types
Shared exception hierarchy for grid, partition, runtime, linear algebra and solvers
"""

from typing import Optional


class PlatformError(Exception):
    """Base class for every error raised by this package"""


class InvalidArgumentError(PlatformError, ValueError):
    """Argument outside its documented domain"""


class UnsupportedDimensionError(PlatformError, ValueError):
    """Curve encoder asked for a dimension it has no tables for"""


class DegenerateDomainError(PlatformError, ValueError):
    """Bounding box with zero extent along an axis"""


class InvalidCoordinateError(PlatformError, ValueError):
    """Lattice or cell coordinate out of range"""


class TooManyRanksError(PlatformError, ValueError):
    """More ranks requested than there are cells to distribute"""


class NotAssembledError(PlatformError, RuntimeError):
    """Operation needs an assembled matrix or a built communication plan"""


class AlreadyAssembledError(PlatformError, RuntimeError):
    """Entries added to a matrix after assembly"""


class WrongOwnerError(PlatformError, ValueError):
    """Row is not owned by the calling rank"""


class MapMismatchError(PlatformError, ValueError):
    """Vectors or matrices built on incompatible index maps"""


class PlanMismatchError(PlatformError, RuntimeError):
    """Communication plans disagree between peer ranks"""


class CollectiveMismatchError(PlatformError, RuntimeError):
    """Ranks entered different collectives at the same step"""


class RankFailureError(PlatformError, RuntimeError):
    """A simulated rank raised; the group was aborted"""

    def __init__(self, rank: int, original: BaseException):
        self.rank = rank
        self.original = original
        super().__init__(f"rank {rank} failed: {type(original).__name__}: {original}")


class SingularPivotError(PlatformError, ArithmeticError):
    """Zero pivot that cannot be shifted (empty row)"""

    def __init__(self, row: int, message: Optional[str] = None):
        self.row = row
        super().__init__(message or f"singular pivot at row {row}")


class InvalidLayoutError(PlatformError, ValueError):
    """Block layout inconsistent with the requested operation"""


class InvalidKindError(PlatformError, ValueError):
    """Unknown preconditioner kind"""


class MatrixMarketError(PlatformError, ValueError):
    """Malformed Matrix Market file"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")
