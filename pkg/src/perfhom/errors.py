"""Exception types raised across the package."""


class PerfhomError(Exception):
    """Base class for all package errors."""


class DivergentMomentError(PerfhomError):
    """A kernel moment integral could not be computed to tolerance."""


class UnboundedProfileError(PerfhomError):
    """The radial profile is not bounded at the origin."""


class ResolutionError(PerfhomError):
    """The grid is too coarse for the requested geometry or kernel."""


class GridMismatchError(PerfhomError):
    """Two grid functions do not live on the same grid."""


class OracleCapError(PerfhomError):
    """Too many nodes for the brute-force energy oracle."""


class ConvergenceError(PerfhomError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class PreconditionError(PerfhomError, ValueError):
    """A construction was requested outside the regime where it is valid."""


class ConfigError(PerfhomError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where += f"[{key}]"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where} {message}".strip())
        self.key = key
        self.line = line
