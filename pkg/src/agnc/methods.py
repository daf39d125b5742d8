"""Named robust-estimation methods shared by the benchmarks.

Non-GNC methods are kernels (optionally re-fitted every iteration) used
inside IRLS from a prior estimate; GNC methods build a weight rule from the
current residuals and run the stage driver.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from agnc.adaptive import (
    NONNEGATIVE_ALPHA_GRID,
    AdaptiveFitWarning,
    AdaptiveKernel,
    AlphaSearchConfig,
    AmbKernel,
    fit_residual_mode,
    select_alpha,
    select_alpha_modeshifted,
)
from agnc.errors import ConfigurationError
from agnc.gnc import AgncRule, GncAmbRule, GncGmRule, GncSchedule, GncTlsRule
from agnc.losses import KernelFamily, chi2_threshold

NON_GNC_METHODS = ("Quadratic", "Cauchy", "Welsch", "BA", "CA", "AMB")
GNC_METHODS = ("GNC-GM", "GNC-TLS", "AGNC", "GNC-AMB")
METHODS = NON_GNC_METHODS + GNC_METHODS


def is_gnc(name: str) -> bool:
    return name in GNC_METHODS


@dataclass
class MethodSettings:
    """Tuning shared by all methods of one experiment.

    ``tau=None`` sets the truncation bound to the ``tau_percentile`` of the
    residuals each time a shape parameter is fitted.  ``cbar=None`` uses the
    square root of the chi-square inlier bound for ``n_e`` dimensions.
    ``refresh_each_iteration=False`` makes ICP fit the shape parameter and
    mode once, at the first association, and keep them for the alignment.
    """

    n_e: int = 3
    tau: float | None = 5.0
    tau_percentile: float = 97.5
    scale: float = 1.0
    cbar: float | None = None
    bins: int = 100
    schedule: GncSchedule = field(default_factory=GncSchedule)
    update_factor: float = 1.4
    max_stages: int = 200
    refresh_each_iteration: bool = True

    def inlier_bound(self) -> float:
        return self.cbar if self.cbar is not None else math.sqrt(chi2_threshold(self.n_e))

    def tau_for(self, eps) -> float:
        if self.tau is not None:
            return self.tau
        return max(float(np.percentile(eps, self.tau_percentile)), 1e-6)

    def search(self, eps) -> AlphaSearchConfig:
        return AlphaSearchConfig(tau=self.tau_for(eps))


class _RefittingKernel:
    """Adaptive kernel whose truncation bound follows the residual percentile."""

    def __init__(self, inner, settings: MethodSettings):
        self.inner = inner
        self.settings = settings

    def refresh(self, eps):
        self.inner.cfg = AlphaSearchConfig(self.inner.cfg.grid, self.settings.tau_for(eps))
        self.inner.refresh(eps)

    def weight(self, eps):
        return self.inner.weight(eps)

    def rho(self, eps):
        return self.inner.rho(eps)


def make_kernel(name: str, settings: MethodSettings):
    """Kernel object for a non-GNC method (``weight``, ``rho`` and maybe ``refresh``)."""
    if name == "Quadratic":
        return KernelFamily.quadratic()
    if name == "Cauchy":
        return KernelFamily.cauchy(settings.scale)
    if name == "Welsch":
        return KernelFamily.welsch(settings.scale)
    if name == "BA":
        return AdaptiveKernel(AlphaSearchConfig(NONNEGATIVE_ALPHA_GRID, tau=math.inf))
    if name == "CA":
        return _RefittingKernel(AdaptiveKernel(), settings)
    if name == "AMB":
        return _RefittingKernel(AmbKernel(n_e=settings.n_e, bin_count=settings.bins), settings)
    raise ConfigurationError(f"unknown non-GNC method {name!r}")


@dataclass
class RuleInfo:
    rule: object
    alpha_star: float | None = None
    mode: float | None = None


def make_gnc_rule(name: str, eps, settings: MethodSettings) -> RuleInfo:
    """Weight rule for a GNC method, fitted to the residuals ``eps`` at the start state."""
    eps = np.asarray(eps, dtype=float)
    if name == "GNC-GM":
        return RuleInfo(GncGmRule(settings.inlier_bound(), settings.update_factor, settings.max_stages))
    if name == "GNC-TLS":
        return RuleInfo(GncTlsRule(settings.inlier_bound(), settings.update_factor, settings.max_stages))
    cfg = settings.search(eps)
    if name == "AGNC":
        alpha = select_alpha(eps, cfg)
        return RuleInfo(AgncRule(alpha, settings.schedule), alpha)
    if name == "GNC-AMB":
        fit = fit_residual_mode(eps, settings.n_e, cfg.tau, settings.bins)
        mode = min(fit.mode, float(np.nextafter(cfg.tau, 0)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AdaptiveFitWarning)
            alpha = select_alpha_modeshifted(eps, mode, cfg)
        return RuleInfo(GncAmbRule(alpha, mode, settings.schedule), alpha, mode)
    raise ConfigurationError(f"unknown GNC method {name!r}")


def check_methods(names) -> list:
    unknown = [m for m in names if m not in METHODS]
    if unknown:
        raise ConfigurationError(f"unknown methods {unknown}; choose from {list(METHODS)}")
    return list(names)
