"""Exception hierarchy; the CLI maps each class to a fixed exit code."""


class AggrespError(Exception):
    exit_code = 3


class ConfigError(AggrespError, ValueError):
    """Invalid configuration or argument values."""

    exit_code = 1


class DataError(AggrespError, ValueError):
    """Input data that cannot support the requested operation."""

    exit_code = 2


class NumericalError(AggrespError, ArithmeticError):
    """A fit or decomposition that failed numerically."""

    exit_code = 3


class RankDeficientError(NumericalError):
    def __init__(self, column: str):
        super().__init__(f"design matrix is rank deficient at column {column!r}")
        self.column = column
