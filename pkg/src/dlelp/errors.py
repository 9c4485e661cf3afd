"""Exception hierarchy shared across the package."""


class DLELPError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DLELPError, ValueError):
    pass


class ConfigError(DLELPError, ValueError):
    pass


class GraphFormatError(DLELPError, ValueError):
    """A graph file does not follow the JSON contract."""


class BackendError(DLELPError):
    def __init__(self, message, attempts=1):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class MalformedResponseError(DLELPError):
    pass


class NumericalDegeneracyError(DLELPError, ArithmeticError):
    pass


class NoExerciseError(DLELPError, LookupError):
    pass


class IngestionError(DLELPError):
    pass


class EmitError(DLELPError, OSError):
    pass


class TrainingAbortedError(DLELPError):
    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}
