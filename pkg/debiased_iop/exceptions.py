from __future__ import annotations as _annotations

from typing import ClassVar

__all__ = (
    'EstimationError',
    'ConfigurationError',
    'UsageError',
    'DataError',
    'DomainError',
    'NumericalError',
    'SimulationError',
    'NegativeOutcomeWarning',
    'InvalidInferenceWarning',
    'DegenerateKernelWarning',
)


class EstimationError(Exception):
    """Base class for every error raised by this package."""

    code: ClassVar[str] = 'E_NUM'
    """Machine-readable prefix printed by the command line."""
    exit_code: ClassVar[int] = 4
    """Process exit status used by the command line."""

    message: str
    """The error message."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)

    def __str__(self) -> str:
        return self.message


class ConfigurationError(EstimationError):
    """Invalid settings: bad fold counts, empty grids, unknown learner names and so on."""

    code = 'E_CONFIG'
    exit_code = 2


class UsageError(ConfigurationError):
    """Error caused by calling the library wrongly, e.g. mismatched array shapes."""


class DataError(EstimationError):
    """Malformed or unusable input data."""

    code = 'E_DATA'
    exit_code = 3

    row: int | None
    """1-based data row of the offending value, if known."""
    column: str | None
    """Name of the offending column, if known."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        super().__init__(message)

    def __str__(self) -> str:
        where = []
        if self.column is not None:
            where.append(f'column {self.column!r}')
        if self.row is not None:
            where.append(f'row {self.row}')
        if where:
            return f'{self.message} ({", ".join(where)})'
        return self.message


class DomainError(DataError):
    """The data is well formed but the functional is undefined on it."""


class NumericalError(EstimationError):
    """A numerical routine failed: singular systems, non-convergence, non-finite kernel values."""

    iterations: int | None
    """Iterations performed before giving up, for iterative solvers."""

    def __init__(self, message: str, *, iterations: int | None = None):
        self.iterations = iterations
        super().__init__(message)


class SimulationError(NumericalError):
    """Every Monte Carlo replication failed."""


class NegativeOutcomeWarning(UserWarning):
    """Some outcomes are negative; the Gini is still computed but loses its usual reading."""


class InvalidInferenceWarning(UserWarning):
    """A reported standard error does not account for first-step estimation."""


class DegenerateKernelWarning(UserWarning):
    """The estimated first-order variance is numerically zero."""
