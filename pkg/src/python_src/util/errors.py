"""
Exception hierarchy shared by the solver, the certifier and the trade models.

Every error raised on purpose by the toolkit derives from FixedPointToolkitError so the
command line front end can map it to an exit code without catching unrelated exceptions.
"""

from typing import List, Optional, Sequence, Tuple


class FixedPointToolkitError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(FixedPointToolkitError, ValueError):
    """Raised for malformed numeric input (negative entries, dimension mismatch, zero vectors)."""


class ReducibleMatrixError(InvalidInputError):
    """Raised when an operation needs an irreducible matrix and receives a reducible one."""

    def __init__(self, message: str, blocs: Optional[List[List[int]]] = None) -> None:
        super().__init__(message)
        self.blocs = blocs or []


class BudgetExceededError(FixedPointToolkitError, RuntimeError):
    """Raised when an iteration cap is hit. `bounds` holds the last (lower, upper) pair when known."""

    def __init__(self, message: str, iterations: int, bounds: Optional[Tuple[float, float]] = None) -> None:
        super().__init__(message)
        self.iterations = iterations
        self.bounds = bounds


class ModelEvaluationError(FixedPointToolkitError, RuntimeError):
    """Raised when F produces a non-positive or non-finite coordinate."""

    def __init__(self, message: str, label: Optional[str] = None) -> None:
        super().__init__(message)
        self.label = label


class DifferentiationError(ModelEvaluationError):
    """Raised when a finite difference produces NaN."""


class EigenspaceAmbiguityError(FixedPointToolkitError, RuntimeError):
    """Raised when the eigenspace of DG for eigenvalue 1 is more than one-dimensional."""

    def __init__(self, message: str, dimension: int) -> None:
        super().__init__(message)
        self.dimension = dimension


class ImpossibleNormalizationError(InvalidInputError):
    """Raised when a numeraire rule cannot be met by rescaling along u."""


class ParameterError(FixedPointToolkitError, ValueError):
    """
    Raised for parameter invariant violations.

    `field` names the offending parameter; `location` optionally carries (file, row, column)
    when the violation was found while reading parameter files.
    """

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        location: Optional[Tuple[str, Optional[int], Optional[str]]] = None,
    ) -> None:
        super().__init__(message)
        self.field = field
        self.location = location


class ParseError(ParameterError):
    """Raised when a parameter or configuration file cannot be parsed."""


class ConnectivityError(ParameterError):
    """Raised when the trade network splits into separate blocs."""

    def __init__(self, message: str, blocs: Sequence[Sequence[str]]) -> None:
        super().__init__(message, field="tau")
        self.blocs = [list(b) for b in blocs]


class StaleStateError(FixedPointToolkitError, ValueError):
    """Raised when outcomes are requested for a state that is not an equilibrium."""

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(message)
        self.residual = residual
