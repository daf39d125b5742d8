"""Robust linear regression Monte-Carlo benchmark.

Each measurement block is ``y_i = A_i x + e_i`` with ``A_i`` an ``n x n``
standard-normal matrix and ``e_i ~ N(0, sigma^2 I)``.  Outlier blocks have
their noise replaced by an offset of uniform direction whose length is
uniform between 1 and ``outlier_scale`` times the chi-square inlier radius
``sigma sqrt(chi2(n, 0.9973))``.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from agnc.errors import ConfigurationError
from agnc.experiments.report import ExperimentReport
from agnc.gnc import run_gnc
from agnc.losses import chi2_threshold
from agnc.methods import MethodSettings, check_methods, is_gnc, make_gnc_rule, make_kernel
from agnc.solvers import WeightedLsProblem, irls

LINREG_METHODS = ("Welsch", "BA", "CA", "AMB", "GNC-GM", "GNC-TLS", "AGNC", "GNC-AMB")

ROW_COLUMNS = (
    "method",
    "condition",
    "rate",
    "trial",
    "error",
    "ls_error",
    "iterations",
    "alpha_star",
    "mode",
    "converged",
    "failed",
    "wall_time",
)


@dataclass
class LinRegConfig:
    N: int = 2000
    n: int = 3
    sigma: float = 0.1
    outlier_rates: tuple = (0.2, 0.4, 0.6, 0.8)
    trials: int = 30
    tau: float = 5.0
    methods: tuple = LINREG_METHODS
    seed: int = 0
    outlier_scale: float = 5.0
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.outlier_rates = tuple(float(r) for r in self.outlier_rates)
        self.methods = tuple(self.methods)
        if self.N < 1 or self.n < 1 or self.trials < 1:
            raise ConfigurationError("N, n and trials must be positive")
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")
        if not self.tau > 0:
            raise ConfigurationError("tau must be positive")
        if not self.outlier_scale >= 1:
            raise ConfigurationError("outlier_scale must be at least 1")
        if not self.outlier_rates:
            raise ConfigurationError("outlier_rates must not be empty")
        if any(not 0 <= r < 1 for r in self.outlier_rates):
            raise ConfigurationError("outlier rates must lie in [0, 1)")
        positive = [r for r in self.outlier_rates if r > 0]
        if positive and self.N * min(positive) < 1:
            raise ConfigurationError("N times the smallest non-zero outlier rate must be at least 1")
        bad = [m for m in self.methods if m not in LINREG_METHODS]
        if bad:
            raise ConfigurationError(f"methods {bad} are not available for linreg; choose from {list(LINREG_METHODS)}")
        check_methods(self.methods)


@dataclass
class LinRegData:
    A: np.ndarray
    y: np.ndarray
    x_true: np.ndarray
    outliers: np.ndarray
    sigma: float

    def problem(self) -> WeightedLsProblem:
        return WeightedLsProblem(self.A, self.y, self.sigma**2)


def _unit_vectors(rng, count, dim):
    v = rng.normal(size=(count, dim))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        v[bad] = rng.normal(size=(int(bad.sum()), dim))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


def gen_linreg(cfg: LinRegConfig, rate: float, rng) -> LinRegData:
    """Draw one data set; exactly ``round(rate N)`` blocks are outliers."""
    N, n, s = cfg.N, cfg.n, cfg.sigma
    A = rng.normal(size=(N, n, n))
    x_true = rng.normal(size=n)
    noise = rng.normal(0.0, s, size=(N, n))
    n_out = int(round(rate * N))
    outliers = np.zeros(N, dtype=bool)
    outliers[rng.permutation(N)[:n_out]] = True
    radius = s * math.sqrt(chi2_threshold(n))
    lengths = radius * rng.uniform(1.0, cfg.outlier_scale, size=n_out)
    # strictly beyond the inlier radius
    lengths = np.maximum(lengths, np.nextafter(radius, np.inf))
    noise[outliers] = _unit_vectors(rng, n_out, n) * lengths[:, None]
    y = np.einsum("nij,j->ni", A, x_true) + noise
    return LinRegData(A, y, x_true, outliers, s)


def trial_rng(seed: int, rate_index: int, trial: int) -> np.random.Generator:
    """Independent stream for one (rate, trial) cell."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rate_index), int(trial)]))


def solve_method(name: str, problem: WeightedLsProblem, x0, settings: MethodSettings):
    """Run one method from ``x0``.

    Returns ``(x, iterations, alpha_star, mode, converged, stage_rows)``;
    ``stage_rows`` is empty for non-GNC methods.
    """
    if is_gnc(name):
        eps = problem.residuals(x0)
        info = make_gnc_rule(name, eps, settings)
        res = run_gnc(problem, info.rule, x0)
        return res.state, len(res.stages), info.alpha_star, info.mode, res.converged, res.stage_rows()
    kernel = make_kernel(name, settings)
    x, report = irls(problem, kernel, x0)
    alpha = getattr(kernel, "alpha", None)
    mode = getattr(kernel, "mode", None)
    return x, report.iterations, alpha, mode, report.converged and not report.diverged, []


def _run_trial(args):
    cfg, rate_index, trial = args
    rate = cfg.outlier_rates[rate_index]
    data = gen_linreg(cfg, rate, trial_rng(cfg.seed, rate_index, trial))
    problem = data.problem()
    x0 = np.linalg.pinv(problem.Aw.reshape(-1, cfg.n)) @ problem.yw.reshape(-1)
    ls_error = float(np.linalg.norm(x0 - data.x_true))
    settings = MethodSettings(n_e=cfg.n, tau=cfg.tau)
    rows, stages = [], []
    for name in cfg.methods:
        t0 = time.perf_counter()
        row = {"method": name, "condition": f"rate={rate!r}", "rate": rate, "trial": trial, "ls_error": ls_error, "failed": ""}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                x, iters, alpha, mode, converged, stage_rows = solve_method(name, problem, x0, settings)
            row.update(
                error=float(np.linalg.norm(x - data.x_true)),
                iterations=iters,
                alpha_star=math.nan if alpha is None else float(alpha),
                mode=math.nan if mode is None else float(mode),
                converged=bool(converged),
            )
            for stage, mu, f, obj, inliers in stage_rows:
                stages.append(
                    {"method": name, "condition": row["condition"], "trial": trial, "iteration": 0, "stage": stage, "mu": mu, "f": f, "objective": obj, "inliers": inliers}
                )
        except Exception as exc:  # a failing method flags its row, the run goes on
            row.update(error=math.nan, iterations=0, alpha_star=math.nan, mode=math.nan, converged=False)
            row["failed"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        row["wall_time"] = time.perf_counter() - t0
        rows.append(row)
    return rows, stages


def run_linreg_mc(cfg: LinRegConfig) -> ExperimentReport:
    """All methods on ``trials`` data sets per outlier rate.

    Trials are independent; with ``cfg.threads > 1`` they run in a process
    pool and are collected in a fixed order, so results do not depend on
    the thread count.
    """
    jobs = [(cfg, i, t) for i in range(len(cfg.outlier_rates)) for t in range(cfg.trials)]
    report = ExperimentReport(ROW_COLUMNS, ("error",))
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    for rows, stages in results:
        report.rows.extend(rows)
        report.stages.extend(stages)
    return report
