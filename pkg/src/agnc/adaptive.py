"""Distribution-level fits on residual sets.

Covers the truncated partition function and the grid search for the
optimal shape parameter, the Maxwell-Boltzmann (chi-like) fit of the
residual density, and the mode-shifted shape search built on both.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from agnc.errors import ConfigurationError, DomainError, FittingError
from agnc.losses import NEG_INF, KernelFamily, rho_adaptive

DEFAULT_ALPHA_GRID = (2.0, 1.5, 1.0, 0.5, 0.0, -0.5, -1.0, -2.0, -4.0, -8.0, -16.0, -32.0, NEG_INF)
NONNEGATIVE_ALPHA_GRID = (2.0, 1.5, 1.0, 0.5, 0.0)
QUADRATURE_INTERVALS = 2000
DEFAULT_BINS = 100


class AdaptiveFitWarning(UserWarning):
    pass


def _residual_array(residuals) -> np.ndarray:
    e = np.asarray(residuals, dtype=float).ravel()
    if e.size == 0:
        raise DomainError("residual set is empty")
    if not np.all(np.isfinite(e)) or np.any(e < 0):
        raise DomainError("residuals must be finite and nonnegative")
    return e


@dataclass(frozen=True)
class EmpiricalDensity:
    """Fixed-width histogram density on ``[bin_edges[0], bin_edges[-1]]``."""

    bin_edges: np.ndarray
    masses: np.ndarray

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def total_mass(self) -> float:
        return float(np.sum(self.masses) * self.bin_width)

    def __call__(self, eps):
        e = np.asarray(eps, dtype=float)
        idx = np.floor((e - self.bin_edges[0]) / self.bin_width).astype(int)
        n = self.masses.size
        # right edge belongs to the last bin, as in np.histogram
        idx = np.where(e == self.bin_edges[-1], n - 1, idx)
        inside = (idx >= 0) & (idx < n)
        out = np.zeros_like(e)
        out[inside] = self.masses[idx[inside]]
        return out

    def peak(self) -> float:
        """Centre of the highest bin."""
        i = int(np.argmax(self.masses))
        return float(0.5 * (self.bin_edges[i] + self.bin_edges[i + 1]))


def estimate_density(residuals, bin_count: int = DEFAULT_BINS, upper: float | None = None) -> EmpiricalDensity:
    """Histogram estimate of the residual density.

    The range is ``[0, max(residuals)]`` unless ``upper`` is given.  Masses
    are normalized by the full sample count, so with an ``upper`` below the
    largest residual the histogram is the restriction of the full density
    and integrates to the fraction of residuals it covers.
    """
    e = _residual_array(residuals)
    if bin_count < 2:
        raise DomainError("bin_count must be at least 2")
    hi = float(np.max(e)) if upper is None else float(upper)
    if hi <= 0:
        hi = 1.0
    counts, edges = np.histogram(e, bins=bin_count, range=(0.0, hi))
    width = edges[1] - edges[0]
    return EmpiricalDensity(edges, counts / (e.size * width))


@functools.lru_cache(maxsize=4096)
def partition_truncated(alpha: float, tau: float, quadrature_step: float | None = None, one_sided: bool = False) -> float:
    """Integral of ``exp(-rho(eps, alpha))`` over ``[-tau, tau]`` (or ``[0, tau]``).

    ``tau = inf`` integrates over the whole line, which only converges for
    ``alpha >= 0``.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")
    if math.isinf(tau):
        if alpha < 0:
            raise ConfigurationError("the untruncated partition function diverges for alpha < 0")
        half, _ = integrate.quad(lambda x: math.exp(-rho_adaptive(x, alpha)), 0.0, math.inf, limit=200)
        return half if one_sided else 2.0 * half
    lo = 0.0 if one_sided else -tau
    step = quadrature_step if quadrature_step else tau / QUADRATURE_INTERVALS
    n = max(2, int(math.ceil((tau - lo) / step)))
    x = np.linspace(lo, tau, n + 1)
    return float(integrate.trapezoid(np.exp(-rho_adaptive(np.abs(x), alpha)), x))


@dataclass(frozen=True)
class AlphaSearchConfig:
    grid: tuple = DEFAULT_ALPHA_GRID
    tau: float = 5.0
    quadrature_step: float | None = None

    def __post_init__(self):
        if len(self.grid) == 0:
            raise ConfigurationError("alpha grid is empty")
        if any(a > 2 for a in self.grid):
            raise ConfigurationError("alpha grid values must be <= 2")
        if not self.tau > 0:
            raise ConfigurationError("tau must be positive")


def alpha_objective(residuals, alpha, tau, quadrature_step=None, one_sided=False) -> float:
    """Negative log-likelihood of the residuals under the truncated adaptive density."""
    e = np.asarray(residuals, dtype=float)
    z = partition_truncated(float(alpha), float(tau), quadrature_step, one_sided)
    return e.size * math.log(z) + float(np.sum(rho_adaptive(e, alpha)))


def _search(e, grid, tau, step, one_sided):
    best, best_val = None, math.inf
    # descending order + strict improvement breaks ties toward larger alpha
    for alpha in sorted(grid, reverse=True):
        val = alpha_objective(e, alpha, tau, step, one_sided)
        if math.isfinite(val) and val < best_val:
            best, best_val = alpha, val
    if best is None:
        raise FittingError("no finite objective over the alpha grid")
    return best


def select_alpha(residuals, cfg: AlphaSearchConfig = AlphaSearchConfig()) -> float:
    """Grid search for the shape parameter that best explains the residuals."""
    e = _residual_array(residuals)
    return _search(e, cfg.grid, cfg.tau, cfg.quadrature_step, False)


def select_alpha_modeshifted(residuals, mode: float, cfg: AlphaSearchConfig = AlphaSearchConfig()) -> float:
    """Shape search on the excess over the mode, ``xi = eps - mode`` for ``xi > 0``.

    The partition integral runs over ``[0, tau - mode]``.  When no residual
    exceeds the mode there is nothing to downweight and 2 is returned with
    an :class:`AdaptiveFitWarning`.
    """
    e = _residual_array(residuals)
    if mode < 0:
        raise DomainError("mode must be nonnegative")
    tau_shift = cfg.tau - mode
    if not tau_shift > 0:
        raise ConfigurationError(f"truncation bound {cfg.tau} must exceed the mode {mode}")
    xi = e - mode
    xi = xi[xi > 0]
    if xi.size == 0:
        warnings.warn("no residuals above the mode; using alpha = 2", AdaptiveFitWarning, stacklevel=2)
        return 2.0
    step = cfg.quadrature_step if cfg.quadrature_step else (tau_shift / QUADRATURE_INTERVALS if math.isfinite(tau_shift) else None)
    return _search(xi, cfg.grid, tau_shift, step, True)


def mb_pdf(eps, a: float, n_e: int):
    """Maxwell-Boltzmann (chi) density of the norm of an ``n_e``-dim Gaussian with scale ``a``."""
    if not a > 0:
        raise DomainError("scale a must be positive")
    e = np.asarray(eps, dtype=float)
    log_norm = n_e * math.log(a) + (0.5 * n_e - 1.0) * math.log(2.0) + special.gammaln(0.5 * n_e)
    val = np.power(e, n_e - 1) * np.exp(-0.5 * e * e / (a * a) - log_norm)
    return float(val) if np.ndim(eps) == 0 else val


@dataclass(frozen=True)
class MbFit:
    a_star: float
    n_e: int
    iterations: int = 0
    objective: float = float("nan")
    mode: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", self.a_star * math.sqrt(self.n_e - 1))


def _mb_terms(eps, a, n_e):
    p = mb_pdf(eps, a, n_e)
    s = -n_e / a + eps * eps / a**3
    dp = p * s
    d2p = p * (s * s + n_e / a**2 - 3.0 * eps * eps / a**4)
    return p, dp, d2p


def fit_mb(
    q: EmpiricalDensity,
    n_e: int,
    tau: float,
    max_iter: int = 50,
    grad_tol: float = 1e-8,
) -> MbFit:
    """Fit the MB scale by minimizing ``int_0^tau (q (p_MB - q))^2``.

    Newton's method on ``u = log a`` with a halving line search; the start is
    the histogram peak divided by ``sqrt(n_e - 1)``.  ``grad_tol`` is relative
    to the objective's natural scale ``int q^4``.
    """
    if n_e < 1:
        raise DomainError("n_e must be a positive integer")
    if not tau > 0:
        raise DomainError("tau must be positive")
    x = np.linspace(0.0, tau, QUADRATURE_INTERVALS + 1)
    qx = q(x)
    q2 = qx * qx
    scale = float(integrate.trapezoid(q2 * q2, x))
    if scale <= 0:
        raise FittingError("residual density is empty on [0, tau]")

    def objective(a):
        p = mb_pdf(x, a, n_e)
        return float(integrate.trapezoid(q2 * (p - qx) ** 2, x))

    peak = q.peak()
    if n_e > 1 and peak > 0:
        a = peak / math.sqrt(n_e - 1)
    else:
        second = float(integrate.trapezoid(x * x * qx, x) / integrate.trapezoid(qx, x))
        a = math.sqrt(max(second / n_e, 1e-12))
    u = math.log(a)
    val = objective(a)
    for it in range(1, max_iter + 1):
        p, dp, d2p = _mb_terms(x, a, n_e)
        r = p - qx
        g_a = 2.0 * integrate.trapezoid(q2 * r * dp, x)
        h_a = 2.0 * integrate.trapezoid(q2 * (dp * dp + r * d2p), x)
        g = a * g_a
        h = a * a * h_a + a * g_a
        if abs(g) <= grad_tol * scale:
            return MbFit(a, n_e, it - 1, val)
        step = -g / h if h > 0 else -math.copysign(0.5, g)
        t = 1.0
        while t > 1e-12:
            a_new = math.exp(u + t * step)
            val_new = objective(a_new)
            if val_new < val:
                break
            t *= 0.5
        else:
            # no descent along the step: stationary up to rounding
            return MbFit(a, n_e, it, val)
        u, a, val = u + t * step, a_new, val_new
        if abs(t * step) < 1e-12:
            return MbFit(a, n_e, it, val)
    raise FittingError(f"MB fit did not converge in {max_iter} iterations", last_iterate=a)


def fit_residual_mode(residuals, n_e: int, tau: float, bin_count: int = DEFAULT_BINS) -> MbFit:
    """Fit the MB scale to the residuals inside the truncation window.

    Only residuals in ``[0, tau]`` are histogrammed and the histogram is
    normalized to unit integral over that window, so the fitted density
    is compared against a unit-area MB curve whatever the share of
    residuals beyond ``tau``.
    """
    e = _residual_array(residuals)
    inside = e[e <= tau]
    if inside.size == 0:
        raise FittingError(f"no residuals inside the truncation window [0, {tau}]")
    q = estimate_density(inside, bin_count, upper=tau)
    return fit_mb(q, n_e, tau)


class AdaptiveKernel:
    """Adaptive kernel whose shape parameter is re-estimated on every refresh.

    With the default search this is the truncated-partition adaptive loss;
    with ``AlphaSearchConfig(NONNEGATIVE_ALPHA_GRID, tau=inf)`` it is the
    original untruncated variant restricted to ``alpha >= 0``.
    """

    def __init__(self, cfg: AlphaSearchConfig = AlphaSearchConfig(), alpha: float = 2.0):
        self.cfg = cfg
        self.kernel = KernelFamily.adaptive(alpha)

    @property
    def alpha(self):
        return self.kernel.params["alpha"]

    def refresh(self, eps):
        self.kernel = KernelFamily.adaptive(select_alpha(eps, self.cfg))

    def weight(self, eps):
        return self.kernel.weight(eps)

    def rho(self, eps):
        return self.kernel.rho(eps)


class AmbKernel:
    """Mode-gap adaptive kernel; mode and shape re-estimated on every refresh."""

    def __init__(self, cfg: AlphaSearchConfig = AlphaSearchConfig(), n_e: int = 3, bin_count: int = DEFAULT_BINS):
        self.cfg = cfg
        self.n_e = n_e
        self.bin_count = bin_count
        self.kernel = KernelFamily.amb(2.0, 0.0)
        self.fit = None

    @property
    def alpha(self):
        return self.kernel.params["alpha"]

    @property
    def mode(self):
        return self.kernel.params["mode"]

    def refresh(self, eps):
        self.fit = fit_residual_mode(eps, self.n_e, self.cfg.tau, self.bin_count)
        mode = min(self.fit.mode, np.nextafter(self.cfg.tau, 0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AdaptiveFitWarning)
            alpha = select_alpha_modeshifted(eps, mode, self.cfg)
        self.kernel = KernelFamily.amb(alpha, mode)

    def weight(self, eps):
        return self.kernel.weight(eps)

    def rho(self, eps):
        return self.kernel.rho(eps)
