"""Robust loss kernels, their gradients and IRLS weights.

All residuals are Mahalanobis distances (unitless, nonnegative).  Every
kernel obeys ``grad(eps) == eps * weight(eps)``, the relation that turns a
robust objective into a sequence of weighted least-squares problems.

The shape parameter ``alpha`` of the adaptive kernel lives in ``[-inf, 2]``;
``NEG_INF`` is the sentinel for the Welsch-like limit and every piecewise
branch dispatches on it explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from agnc.errors import ConfigurationError, DomainError

NEG_INF = float("-inf")

# |alpha| or |alpha - 2| below this snaps to the closed-form branch; the
# general expression is 0/0 there.
BRANCH_GUARD = 1e-5

OUTLIER_PROBABILITY = 0.9973

QUADRATIC = "quadratic"
CAUCHY = "cauchy"
WELSCH = "welsch"
GEMAN_MCCLURE = "geman_mcclure"
TRUNCATED_LS = "tls"
ADAPTIVE = "adaptive"
AMB = "amb"

KERNEL_TAGS = (QUADRATIC, CAUCHY, WELSCH, GEMAN_MCCLURE, TRUNCATED_LS, ADAPTIVE, AMB)


def is_neg_inf(alpha) -> bool:
    return alpha == NEG_INF


def _branch(alpha) -> str:
    if alpha is None or (isinstance(alpha, float) and math.isnan(alpha)):
        raise DomainError("shape parameter is missing or NaN")
    if is_neg_inf(alpha):
        return "neginf"
    if alpha > 2.0 + BRANCH_GUARD:
        raise DomainError(f"shape parameter must be <= 2, got {alpha}")
    if abs(alpha - 2.0) < BRANCH_GUARD:
        return "quadratic"
    if abs(alpha) < BRANCH_GUARD:
        return "cauchy"
    return "general"


def _residuals(eps):
    e = np.asarray(eps, dtype=float)
    if not np.all(np.isfinite(e)):
        raise DomainError("residuals must be finite")
    return e


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


def rho_adaptive(eps, alpha):
    """Adaptive loss value, piecewise in ``alpha`` to avoid the singular points."""
    e = _residuals(eps)
    sq = e * e
    branch = _branch(alpha)
    if branch == "quadratic":
        val = 0.5 * sq
    elif branch == "cauchy":
        val = np.log1p(0.5 * sq)
    elif branch == "neginf":
        val = -np.expm1(-0.5 * sq)
    else:
        b = abs(alpha - 2.0)
        val = (b / alpha) * np.expm1(0.5 * alpha * np.log1p(sq / b))
    return _out(val, eps)


def weight_adaptive(eps, alpha):
    """IRLS weight of the adaptive loss, ``(1/eps) d rho / d eps``."""
    e = _residuals(eps)
    sq = e * e
    branch = _branch(alpha)
    if branch == "quadratic":
        val = np.ones_like(sq)
    elif branch == "cauchy":
        val = 2.0 / (sq + 2.0)
    elif branch == "neginf":
        val = np.exp(-0.5 * sq)
    else:
        b = abs(alpha - 2.0)
        val = np.exp((0.5 * alpha - 1.0) * np.log1p(sq / b))
    return _out(val, eps)


def weight_amb(eps, mode, alpha):
    """Mode-gap weight: 1 up to the mode, adaptive weight of the excess beyond it."""
    if mode < 0:
        raise DomainError("mode must be nonnegative")
    e = _residuals(eps)
    xi = np.maximum(e - mode, 0.0)
    val = np.where(e <= mode, 1.0, weight_adaptive(xi, alpha))
    return _out(val, eps)


def _integral_weight_adaptive(xi, alpha):
    """Closed form of the running integral of the adaptive weight from 0 to ``xi``."""
    branch = _branch(alpha)
    if branch == "quadratic":
        return xi
    if branch == "cauchy":
        return math.sqrt(2.0) * np.arctan(xi / math.sqrt(2.0))
    if branch == "neginf":
        return math.sqrt(0.5 * math.pi) * special.erf(xi / math.sqrt(2.0))
    b = abs(alpha - 2.0)
    power = 1.0 - 0.5 * alpha
    # int_0^x (1 + s^2/b)^(-p) ds = x 2F1(p, 1/2; 3/2; -x^2/b)
    return xi * special.hyp2f1(power, 0.5, 1.5, -(xi * xi) / b)


def rho_amb(eps, mode, alpha):
    """Closed-form AMB loss via the hypergeometric integral of the shifted weight.

    Cross-checked in the test-suite against :func:`rho_amb_numeric`.
    """
    if mode < 0:
        raise DomainError("mode must be nonnegative")
    e = _residuals(eps)
    inner = np.minimum(e, mode)
    xi = np.maximum(e - mode, 0.0)
    val = 0.5 * inner * inner + np.where(
        e > mode,
        rho_adaptive(xi, alpha) + mode * _integral_weight_adaptive(xi, alpha),
        0.0,
    )
    return _out(val, eps)


def rho_amb_numeric(eps_grid, mode, alpha):
    """Cumulative trapezoid of ``eps * weight_amb(eps)`` over an ascending grid from 0."""
    grid = _residuals(eps_grid)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("grid must be a non-empty 1-D sequence")
    if grid[0] != 0.0:
        raise DomainError("grid must start at 0")
    if np.any(np.diff(grid) < 0):
        raise DomainError("grid must be sorted ascending")
    integrand = grid * weight_amb(grid, mode, alpha)
    return integrate.cumulative_trapezoid(integrand, grid, initial=0.0)


def chi2_threshold(dim: int, probability: float = OUTLIER_PROBABILITY) -> float:
    """Inverse chi-square CDF; the squared-residual inlier bound for ``dim`` dimensions."""
    return float(stats.chi2.ppf(probability, dim))


_REQUIRED = {
    QUADRATIC: (),
    CAUCHY: ("c",),
    WELSCH: ("c",),
    GEMAN_MCCLURE: ("c",),
    TRUNCATED_LS: ("cbar",),
    ADAPTIVE: ("alpha",),
    AMB: ("alpha", "mode"),
}


@dataclass(frozen=True)
class KernelFamily:
    """A robust kernel and its parameters.

    Classical kernels use a scale ``c`` (default 1, since residuals are
    already covariance-normalized):

    * Cauchy ``w = 1 / (1 + (eps/c)^2)``
    * Welsch ``w = exp(-(eps/c)^2)``
    * Geman-McClure ``w = (1 + (eps/c)^2)^-2``, from ``rho = eps^2 / (2 (1 + eps^2/c^2))``
    * truncated LS ``w = 1 if eps <= cbar else 0``
    """

    tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in _REQUIRED:
            raise ConfigurationError(f"unknown kernel tag {self.tag!r}")
        for name in _REQUIRED[self.tag]:
            if name not in self.params:
                raise ConfigurationError(f"kernel {self.tag!r} needs parameter {name!r}")
            value = self.params[name]
            if name == "alpha":
                _branch(value)
                continue
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite")
        for name in ("c", "cbar"):
            if name in self.params and self.params[name] <= 0:
                raise ConfigurationError(f"{name} must be > 0, got {self.params[name]}")
        if self.tag == AMB and self.params["mode"] < 0:
            raise ConfigurationError("mode must be nonnegative")

    @classmethod
    def quadratic(cls):
        return cls(QUADRATIC)

    @classmethod
    def cauchy(cls, c=1.0):
        return cls(CAUCHY, {"c": c})

    @classmethod
    def welsch(cls, c=1.0):
        return cls(WELSCH, {"c": c})

    @classmethod
    def geman_mcclure(cls, c=1.0):
        return cls(GEMAN_MCCLURE, {"c": c})

    @classmethod
    def truncated_ls(cls, cbar=None, dim=1):
        if cbar is None:
            cbar = math.sqrt(chi2_threshold(dim))
        return cls(TRUNCATED_LS, {"cbar": cbar})

    @classmethod
    def adaptive(cls, alpha):
        return cls(ADAPTIVE, {"alpha": alpha})

    @classmethod
    def amb(cls, alpha, mode):
        return cls(AMB, {"alpha": alpha, "mode": mode})

    def rho(self, eps):
        e = _residuals(eps)
        p = self.params
        if self.tag == QUADRATIC:
            val = 0.5 * e * e
        elif self.tag == CAUCHY:
            c2 = p["c"] ** 2
            val = 0.5 * c2 * np.log1p(e * e / c2)
        elif self.tag == WELSCH:
            c2 = p["c"] ** 2
            val = -0.5 * c2 * np.expm1(-e * e / c2)
        elif self.tag == GEMAN_MCCLURE:
            c2 = p["c"] ** 2
            val = 0.5 * e * e / (1.0 + e * e / c2)
        elif self.tag == TRUNCATED_LS:
            val = 0.5 * np.minimum(e * e, p["cbar"] ** 2)
        elif self.tag == ADAPTIVE:
            val = rho_adaptive(e, p["alpha"])
        else:
            val = rho_amb(e, p["mode"], p["alpha"])
        return _out(val, eps)

    def weight(self, eps):
        if self.tag in (CAUCHY, WELSCH, GEMAN_MCCLURE, TRUNCATED_LS):
            return weight_classic(eps, self)
        e = _residuals(eps)
        if self.tag == QUADRATIC:
            val = np.ones_like(e)
        elif self.tag == ADAPTIVE:
            val = weight_adaptive(e, self.params["alpha"])
        else:
            val = weight_amb(e, self.params["mode"], self.params["alpha"])
        return _out(val, eps)

    def grad(self, eps):
        return grad_rho(eps, self)


def weight_classic(eps, kernel: KernelFamily):
    """IRLS weight of a fixed-scale classical kernel."""
    e = _residuals(eps)
    p = kernel.params
    if kernel.tag == CAUCHY:
        val = 1.0 / (1.0 + (e / p["c"]) ** 2)
    elif kernel.tag == WELSCH:
        val = np.exp(-((e / p["c"]) ** 2))
    elif kernel.tag == GEMAN_MCCLURE:
        val = (1.0 + (e / p["c"]) ** 2) ** -2
    elif kernel.tag == TRUNCATED_LS:
        val = np.where(e <= p["cbar"], 1.0, 0.0)
    else:
        raise ConfigurationError(f"{kernel.tag!r} is not a classical kernel")
    return _out(val, eps)


def grad_rho(eps, kernel: KernelFamily):
    """Derivative of the kernel's loss with respect to the residual."""
    if not isinstance(kernel, KernelFamily):
        raise ConfigurationError(f"not a kernel: {kernel!r}")
    e = _residuals(eps)
    return _out(e * np.asarray(kernel.weight(e)), eps)
