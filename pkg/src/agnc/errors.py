"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(ValueError):
    """A kernel, schedule or experiment is misconfigured."""


class FittingError(RuntimeError):
    """A distribution or shape-parameter fit failed.

    ``last_iterate`` carries the final value reached, when there is one.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class RankDeficiencyError(RuntimeError):
    """Normal equations are singular; ``null_direction`` is the offending vector."""

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class DivergenceError(RuntimeError):
    """An iterative solver produced a non-finite objective."""
