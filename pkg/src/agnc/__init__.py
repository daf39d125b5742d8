"""Adaptive robust kernels, graduated non-convexity and robust ICP."""

from agnc.errors import ConfigurationError, DivergenceError, DomainError, FittingError, RankDeficiencyError
from agnc.losses import KernelFamily, rho_adaptive, rho_amb, weight_adaptive, weight_amb

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DivergenceError",
    "DomainError",
    "FittingError",
    "KernelFamily",
    "RankDeficiencyError",
    "rho_adaptive",
    "rho_amb",
    "weight_adaptive",
    "weight_amb",
]
