"""Exception and warning types shared across the package."""

from __future__ import annotations


class ReprError(Exception):
    """Base class for all package errors."""


class DomainError(ReprError, ValueError):
    """A linear predictor fell outside the valid domain of a link function."""


class RankError(ReprError, ValueError):
    """A weighted normal / information matrix is singular.

    ``column`` is the index of the first column found to be (numerically)
    a linear combination of the preceding ones, ``name`` its label if known.
    """

    def __init__(self, message: str, column: int | None = None, name: str | None = None):
        super().__init__(message)
        self.column = column
        self.name = name


class ConfigError(ReprError, ValueError):
    """Invalid parameters for a partition, experiment or command."""


class AggregationError(ReprError, RuntimeError):
    """Every block of a divide-and-conquer fit failed."""


class GenerationError(ReprError, ValueError):
    """Synthetic data could not be generated with the requested parameters."""


class DataFormatError(ReprError, ValueError):
    """A data or partition file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class IllConditionedWarning(UserWarning):
    """Normal equations have a condition number above the warning threshold."""
