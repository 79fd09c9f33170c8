"""Exception hierarchy, mapped to command line exit codes by ggda.cl_main."""


class GgdaError(Exception):
    """Base class of all errors raised on purpose by this package."""


class DataError(GgdaError, ValueError):
    """Malformed input data, or violated precondition (exit code 2)."""


class NumericalError(GgdaError, ArithmeticError):
    """Solver failure (exit code 3)."""
