"""Exception hierarchy shared across the package."""


class HemsError(Exception):
    """Base class for all package errors."""


class DomainError(HemsError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(HemsError, ValueError):
    """Inconsistent system parameters or configuration file."""


class InfeasibleError(HemsError):
    """A dispatch violates a physical constraint.

    ``overshoot`` is the magnitude (kWh) by which the bound was crossed.
    """

    def __init__(self, message, overshoot=0.0):
        super().__init__(message)
        self.overshoot = float(overshoot)


class DataError(HemsError, ValueError):
    """Malformed or insufficient input data."""


class SolverError(HemsError):
    """The MILP/LP machinery could not produce an answer."""


class ResourceError(SolverError):
    """A search limit was hit; ``incumbent`` holds the best answer so far."""

    def __init__(self, message, incumbent=None):
        super().__init__(message)
        self.incumbent = incumbent


class TrainingError(HemsError):
    """Training diverged (non-finite loss or gradient)."""


class MetricError(HemsError, ValueError):
    """A metric is undefined for the given inputs (e.g. a zero denominator)."""
