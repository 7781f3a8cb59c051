"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`SnapeError` so callers
(and the CLI exit-code mapping) can distinguish user mistakes, malformed
inputs, solver trouble, and numerical breakdown without string matching.
"""


class SnapeError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(SnapeError, ValueError):
    """Invalid argument values or inconsistent configuration."""


class DomainError(ArgumentError):
    """Evaluation point outside the knot domain [a, b]."""


class DerivativeOrderError(ArgumentError):
    """Requested derivative order d outside 0 <= d <= order - 1."""


class AxisMismatchError(ArgumentError):
    """Grid axes and basis axes disagree in count, names, or range."""


class ModelError(SnapeError, ValueError):
    """Semantically invalid model (undeclared names, bad structure)."""


class ParseError(SnapeError, ValueError):
    """Syntax error in a model file or expression, with position info."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.short_message = message


class DataFormatError(SnapeError, ValueError):
    """Malformed grid file, CSV table, or result document."""


class NumericalError(SnapeError, RuntimeError):
    """Numerical breakdown (singular system, failed factorization)."""


class DegenerateTermError(NumericalError):
    """A term's sampled action is numerically zero, so its coefficient
    is not identifiable from the data."""


class ConvergenceError(SnapeError, RuntimeError):
    """Solver failed to converge where a converged result is required."""


class SimulationError(SnapeError, RuntimeError):
    """Simulator blow-up or unstable configuration."""


class BootstrapError(SnapeError, RuntimeError):
    """Too many bootstrap replicates failed to produce estimates."""
