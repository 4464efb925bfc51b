"""Exception hierarchy.

Each family carries the process exit code the CLI maps it to.
"""

from __future__ import annotations


class RobustLMError(Exception):
    exit_code = 1


class ConfigError(RobustLMError):
    """Bad command-line arguments or column selection."""

    exit_code = 2


class DataError(RobustLMError):
    exit_code = 3


class EmptyDataError(DataError):
    pass


class SingularDesignError(DataError):
    def __init__(self, message: str, columns: list[str] | None = None):
        super().__init__(message)
        self.columns = list(columns or [])


class InsufficientReplicationError(DataError):
    def __init__(self, message: str, groups: list[int] | None = None):
        super().__init__(message)
        self.groups = list(groups or [])


class NumericalError(RobustLMError):
    exit_code = 4


class DivergenceError(NumericalError):
    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class StudyError(NumericalError):
    """Too many replicate failures in a simulation run."""


class InvalidParameterError(RobustLMError, ValueError):
    exit_code = 2
