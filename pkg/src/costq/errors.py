"""Exception types shared across the package."""


class CostqError(Exception):
    """Base class for all package errors."""


class ConfigError(CostqError):
    """Invalid or inconsistent configuration (CLI exit code 1)."""


class DataError(CostqError):
    """Problem ingesting or validating input data (CLI exit code 2)."""


class TrainingDiverged(CostqError):
    """Non-finite loss or parameter update during training (CLI exit code 3)."""


class IllegalActionError(CostqError):
    """An action was applied that is not legal in the current environment state."""


class NotReadyError(CostqError):
    """Operation needs state that does not exist yet (e.g. sampling an empty buffer)."""
