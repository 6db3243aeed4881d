"""Exception hierarchy shared by all modules."""


class LevyFoliationError(Exception):
    """Base class for every error raised by this package."""


class ParameterDomainError(LevyFoliationError, ValueError):
    """A parameter lies outside its admissible domain."""


class GridRangeError(LevyFoliationError, IndexError):
    """A time is off-grid or a requested window leaves the available grid."""


class DivergenceError(LevyFoliationError, ArithmeticError):
    """A computation produced non-finite values.

    Attributes
    ----------
    time : float or None
        Grid time at which the first non-finite value appeared.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class NonConvergenceError(LevyFoliationError, RuntimeError):
    """Picard iteration hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class ConfigError(LevyFoliationError, ValueError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, message, path=None, line=None, column=None):
        loc = ""
        if path:
            loc = f"{path}: "
        elif line is not None:
            loc = f"line {line}, column {column}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line
        self.column = column
