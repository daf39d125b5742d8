"""Graduated nonconvexity: shape functions, outlier processes and the stage driver.

The adaptive surrogate replaces ``alpha`` by a shape function ``f(mu, alpha*)``
that sweeps from 2 (convex, quadratic) to ``alpha*`` as the control
parameter ``mu`` moves between two user constants.  Two variants are
provided:

* ``INCREASING``: ``f = (alpha* mu + 2) / (mu + 1)`` for ``mu`` from 0 to inf,
  ``f = 2 - mu`` when ``alpha* = -inf``.
* ``DECREASING``: ``f = (alpha* + 2 mu - 2) / mu`` for ``mu`` from inf to 1,
  ``f = (2 mu - 3) / (mu - 1)`` when ``alpha* = -inf``.

``DECREASING`` is the default because it recovers the target loss at a
finite ``mu``.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from agnc.adaptive import AlphaSearchConfig, MbFit, fit_residual_mode, select_alpha, select_alpha_modeshifted
from agnc.errors import ConfigurationError, DivergenceError, DomainError
from agnc.losses import NEG_INF, is_neg_inf, rho_adaptive, weight_adaptive


class ShapeVariant(enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"


def shape_fn(variant: ShapeVariant, mu: float, alpha_star: float) -> float:
    """Effective shape parameter for control value ``mu``."""
    variant = ShapeVariant(variant)
    if variant is ShapeVariant.INCREASING:
        if not mu > 0:
            raise DomainError(f"mu must be > 0 for the increasing variant, got {mu}")
        if is_neg_inf(alpha_star):
            return 2.0 - mu
        if math.isinf(mu):
            return float(alpha_star)
        return (alpha_star * mu + 2.0) / (mu + 1.0)
    if not mu >= 1:
        raise DomainError(f"mu must be >= 1 for the decreasing variant, got {mu}")
    if math.isinf(mu):
        return 2.0
    if is_neg_inf(alpha_star):
        return NEG_INF if mu == 1 else (2.0 * mu - 3.0) / (mu - 1.0)
    return (alpha_star + 2.0 * mu - 2.0) / mu


def gnc_weight(eps, f):
    """Optimal weight of the surrogate outlier-process problem at shape ``f``.

    This is the adaptive weight with ``f`` substituted for ``alpha``; the
    implementation is shared so the two can never drift apart.
    """
    return weight_adaptive(eps, f)


def rho_surrogate(eps, f):
    return rho_adaptive(eps, f)


def outlier_process_agnc(w, f):
    """Black-Rangarajan penalty on the weight for the adaptive surrogate at shape ``f``.

    ``f = 0`` and ``f = 2`` use the limits of the general expression:
    ``w - 1 - log w`` and 0.  ``f = -inf`` gives ``w log w - w + 1``.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0) or np.any(w > 1):
        raise DomainError("weights must lie in (0, 1]")
    if is_neg_inf(f):
        val = w * np.log(w) - w + 1.0
    elif abs(f - 2.0) < 1e-12:
        val = np.zeros_like(w)
    elif abs(f) < 1e-12:
        val = w - 1.0 - np.log(w)
    elif f > 2:
        raise DomainError("shape must be <= 2")
    else:
        # w * w^(2/(f-2)) = w^(f/(f-2)), so both terms share one power u and
        # the expression stays finite (or +inf) where the raw form gives inf - inf
        b = 2.0 - f
        lw = np.log(w)
        with np.errstate(over="ignore"):
            u_minus_1 = np.expm1(f / (f - 2.0) * lw)
        val = (b * b / (2.0 * f)) * u_minus_1 + (b / 2.0) * np.expm1(lw)
    return float(val) if val.ndim == 0 else val


def weight_gnc_gm(eps, mu, c):
    """Geman-McClure GNC weight ``(mu c^2 / (eps^2 + mu c^2))^2``; convex as mu -> inf."""
    if not (mu > 0 and c > 0):
        raise DomainError("mu and c must be positive")
    e = np.asarray(eps, dtype=float)
    mc = mu * c * c
    val = (mc / (e * e + mc)) ** 2
    return float(val) if val.ndim == 0 else val


def weight_gnc_tls(eps, mu, cbar):
    """Truncated-least-squares GNC weight; binary as mu -> inf."""
    if not (mu > 0 and cbar > 0):
        raise DomainError("mu and cbar must be positive")
    e = np.asarray(eps, dtype=float)
    sq = e * e
    c2 = cbar * cbar
    lo = mu / (mu + 1.0) * c2
    hi = (mu + 1.0) / mu * c2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        mid = cbar * np.sqrt(mu * (mu + 1.0)) / e - mu
    val = np.where(sq <= lo, 1.0, np.where(sq >= hi, 0.0, mid))
    return float(val) if val.ndim == 0 else val


@dataclass
class GncSchedule:
    """Control-parameter schedule for the adaptive rules.

    The start ``mu`` puts ``f`` within half of ``start_tolerance`` of 2.  Stages
    stop once ``|f - alpha*| <= f_tolerance``, or ``f <= f_floor`` when
    ``alpha* = -inf``.  For the decreasing variant with ``alpha* = -inf``
    the gap ``mu - 1`` shrinks geometrically, since ``mu = 1`` is a pole.
    """

    variant: ShapeVariant = ShapeVariant.DECREASING
    update_factor: float = 1.4
    f_tolerance: float = 1e-3
    start_tolerance: float = 1e-6
    f_floor: float = -32.0
    max_stages: int = 200
    inner_iterations: int = 1
    mu: float | None = None

    def __post_init__(self):
        self.variant = ShapeVariant(self.variant)
        if not self.update_factor > 1:
            raise ConfigurationError("update_factor must be > 1")
        if not (self.f_tolerance > 0 and self.start_tolerance > 0):
            raise ConfigurationError("tolerances must be positive")
        if self.max_stages < 1 or self.inner_iterations < 1:
            raise ConfigurationError("max_stages and inner_iterations must be >= 1")

    def initial_mu(self, alpha_star: float) -> float:
        if self.mu is not None:
            return self.mu
        # aim for half the tolerance so rounding cannot push |f - 2| over it
        tol = 0.5 * self.start_tolerance
        if self.variant is ShapeVariant.DECREASING:
            if is_neg_inf(alpha_star):
                return 1.0 + 1.0 / tol
            return max(2.0, abs(alpha_star - 2.0) / tol)
        if is_neg_inf(alpha_star):
            return tol
        return tol / max(abs(alpha_star - 2.0), 1.0)

    def next_mu(self, mu: float, alpha_star: float) -> float:
        if self.variant is ShapeVariant.INCREASING:
            return mu * self.update_factor
        if is_neg_inf(alpha_star):
            return 1.0 + (mu - 1.0) / self.update_factor
        return max(1.0, mu / self.update_factor)

    def finished(self, f: float, alpha_star: float) -> bool:
        if is_neg_inf(alpha_star):
            return f <= self.f_floor
        return abs(f - alpha_star) <= self.f_tolerance


class AgncRule:
    """Adaptive GNC weights on raw residuals."""

    name = "AGNC"

    def __init__(self, alpha_star: float, schedule: GncSchedule | None = None):
        self.alpha_star = alpha_star
        self.schedule = schedule or GncSchedule()

    def initial_mu(self, eps):
        return self.schedule.initial_mu(self.alpha_star)

    def shape(self, mu):
        return shape_fn(self.schedule.variant, mu, self.alpha_star)

    def _shifted(self, eps):
        return np.asarray(eps, dtype=float)

    def weights(self, eps, mu):
        return gnc_weight(self._shifted(eps), self.shape(mu))

    def objective(self, eps, mu):
        return float(np.sum(rho_surrogate(self._shifted(eps), self.shape(mu))))

    def finished(self, mu, weights):
        return self.schedule.finished(self.shape(mu), self.alpha_star)

    def next_mu(self, mu):
        return self.schedule.next_mu(mu, self.alpha_star)


class GncAmbRule(AgncRule):
    """Adaptive GNC on mode-shifted residuals; residuals at or below the mode keep weight 1."""

    name = "GNC-AMB"

    def __init__(self, alpha_star: float, mode: float, schedule: GncSchedule | None = None):
        super().__init__(alpha_star, schedule)
        if mode < 0:
            raise ConfigurationError("mode must be nonnegative")
        self.mode = mode

    def _shifted(self, eps):
        return np.maximum(np.asarray(eps, dtype=float) - self.mode, 0.0)


class GncGmRule:
    """Geman-McClure GNC: mu starts at ``2 max(eps)^2 / c^2`` and is divided down to 1."""

    name = "GNC-GM"

    def __init__(self, c: float, update_factor: float = 1.4, max_stages: int = 200):
        if not c > 0:
            raise ConfigurationError("c must be positive")
        self.c = c
        self.update_factor = update_factor
        self.max_stages = max_stages

    def initial_mu(self, eps):
        return max(1.0, 2.0 * float(np.max(eps)) ** 2 / self.c**2)

    def shape(self, mu):
        return float("nan")

    def weights(self, eps, mu):
        return weight_gnc_gm(eps, mu, self.c)

    def objective(self, eps, mu):
        e = np.asarray(eps, dtype=float)
        mc = mu * self.c**2
        return float(np.sum(0.5 * mc * e * e / (mc + e * e)))

    def finished(self, mu, weights):
        return mu <= 1.0

    def next_mu(self, mu):
        return max(1.0, mu / self.update_factor)


class GncTlsRule:
    """Truncated-least-squares GNC: mu grows from ``cbar^2 / (2 max(eps)^2 - cbar^2)`` until weights are binary."""

    name = "GNC-TLS"

    def __init__(self, cbar: float, update_factor: float = 1.4, max_stages: int = 200, binary_tol: float = 1e-6):
        if not cbar > 0:
            raise ConfigurationError("cbar must be positive")
        self.cbar = cbar
        self.update_factor = update_factor
        self.max_stages = max_stages
        self.binary_tol = binary_tol

    def initial_mu(self, eps):
        r2 = float(np.max(eps)) ** 2
        c2 = self.cbar**2
        if 2.0 * r2 <= c2:
            # every residual is already an inlier: start in the binary regime
            return 1e6
        return c2 / (2.0 * r2 - c2)

    def shape(self, mu):
        return float("nan")

    def weights(self, eps, mu):
        return weight_gnc_tls(eps, mu, self.cbar)

    def objective(self, eps, mu):
        e = np.asarray(eps, dtype=float)
        return float(np.sum(0.5 * np.minimum(e * e, self.cbar**2)))

    def finished(self, mu, weights):
        w = np.asarray(weights)
        return bool(np.all((w <= self.binary_tol) | (w >= 1.0 - self.binary_tol)))

    def next_mu(self, mu):
        return mu * self.update_factor


@dataclass
class StageRecord:
    stage: int
    mu: float
    f: float
    objective: float
    inlier_count: int


@dataclass
class GncResult:
    state: object
    weights: np.ndarray
    stages: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    mb_fit: MbFit | None = None
    alpha_star: float | None = None
    mode: float | None = None

    def stage_rows(self):
        return [(s.stage, s.mu, s.f, s.objective, s.inlier_count) for s in self.stages]


def _max_stages(rule):
    schedule = getattr(rule, "schedule", None)
    return schedule.max_stages if schedule is not None else rule.max_stages


def _inner_iterations(rule):
    schedule = getattr(rule, "schedule", None)
    return schedule.inner_iterations if schedule is not None else 1


def run_gnc(problem, rule, x0=None) -> GncResult:
    """Alternate weight updates and weighted solves while the surrogate hardens.

    ``problem`` supplies ``residuals(x)`` and ``solve(weights, x)``; the
    second returns the weighted least-squares update starting from ``x``.
    Without ``x0`` the start is the unweighted solution, so no prior is
    needed.
    """
    t0 = time.perf_counter()
    if x0 is None:
        x0 = problem.solve(np.ones(problem.size), None)
    x = x0
    eps = problem.residuals(x)
    mu = rule.initial_mu(eps)
    stages = []
    converged = False
    w = np.ones_like(eps)
    for stage in range(_max_stages(rule)):
        f = rule.shape(mu)
        for _ in range(_inner_iterations(rule)):
            w = rule.weights(eps, mu)
            try:
                x = problem.solve(w, x)
            except Exception as exc:
                exc.gnc_stage = stage
                raise
            eps = problem.residuals(x)
        obj = rule.objective(eps, mu)
        if not math.isfinite(obj):
            raise DivergenceError(f"non-finite objective at GNC stage {stage}")
        stages.append(StageRecord(stage, float(mu), float(f), obj, int(np.sum(w >= 0.5))))
        if rule.finished(mu, w):
            converged = True
            break
        mu = rule.next_mu(mu)
    return GncResult(x, np.asarray(w), stages, converged, time.perf_counter() - t0)


def agnc_pipeline(problem, cfg: AlphaSearchConfig = AlphaSearchConfig(), schedule: GncSchedule | None = None, x0=None) -> GncResult:
    """Select the shape parameter from the starting residuals, then run adaptive GNC."""
    if x0 is None:
        x0 = problem.solve(np.ones(problem.size), None)
    eps = problem.residuals(x0)
    alpha = select_alpha(eps, cfg)
    res = run_gnc(problem, AgncRule(alpha, schedule), x0)
    res.alpha_star = alpha
    return res


def gnc_amb_pipeline(
    problem,
    n_e: int,
    cfg: AlphaSearchConfig = AlphaSearchConfig(),
    schedule: GncSchedule | None = None,
    x0=None,
    bin_count: int = 100,
    mode: float | None = None,
) -> GncResult:
    """Fit the MB mode, select the mode-shifted shape, then run GNC on the shifted residuals.

    ``mode`` overrides the fitted mode (``mode=0`` reduces to plain AGNC
    weighting on the raw residuals).
    """
    if x0 is None:
        x0 = problem.solve(np.ones(problem.size), None)
    eps = problem.residuals(x0)
    fit = None
    if mode is None:
        fit = fit_residual_mode(eps, n_e, cfg.tau, bin_count)
        mode = fit.mode
    mode = min(mode, float(np.nextafter(cfg.tau, 0)))
    alpha = select_alpha_modeshifted(eps, mode, cfg)
    res = run_gnc(problem, GncAmbRule(alpha, mode, schedule), x0)
    res.mb_fit, res.alpha_star, res.mode = fit, alpha, mode
    return res
