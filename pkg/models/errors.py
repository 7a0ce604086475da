"""Error types raised by the services.

Every error derives from CodsaError and from the closest built-in exception,
so callers may catch either.
"""
from typing import Optional


class CodsaError(Exception):
    """Base class for all domain errors."""


class DimensionError(CodsaError, ValueError):
    """Array shapes do not agree."""


class StateError(CodsaError, RuntimeError):
    """An object is used before it is ready (e.g. backward without forward)."""


class TrainingDivergenceError(CodsaError, ArithmeticError):
    """A loss or gradient became non-finite during training."""


class GenerationError(CodsaError, RuntimeError):
    """A simulation could not produce the requested data."""


class CapacityError(CodsaError, ValueError):
    """Not enough rows to satisfy a request."""


class ParseError(CodsaError, ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaMismatchError(CodsaError, ValueError):
    """Two datasets or a dataset and a model disagree on the row schema."""


class SimplexError(CodsaError, ValueError):
    """An allocation vector is not on the probability simplex."""


class FeasibilityError(CodsaError, ValueError):
    """The synthetic size is too small for the optimal allocation."""

    def __init__(self, message: str, bound: int):
        self.bound = bound
        super().__init__(f"{message} (minimum feasible m = {bound})")


class UnboundedAllocationError(CodsaError, ValueError):
    """No finite synthetic size makes the optimal allocation feasible."""


class UndefinedIndexError(CodsaError, ZeroDivisionError):
    """An index is undefined for the given sizes."""


class UndefinedProportionError(CodsaError, ValueError):
    """Region proportions of an empty dataset are undefined."""


class ProvenanceError(CodsaError, ValueError):
    """Synthetic rows appeared where only real rows are allowed."""


class EmptyInputError(CodsaError, ValueError):
    """An operation received no values."""


class ConfigError(CodsaError, ValueError):
    """An experiment configuration is invalid."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        self.detail = message
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
