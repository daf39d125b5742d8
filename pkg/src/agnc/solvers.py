"""Weighted least squares, IRLS and Gauss-Newton over SE(3)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from agnc.errors import DivergenceError, DomainError, RankDeficiencyError
from agnc.geometry.lie import Pose, se3_exp


@dataclass
class SolverReport:
    iterations: int = 0
    objective: float = float("nan")
    converged: bool = False
    diverged: bool = False
    step_norms: list = field(default_factory=list)


def solve_spd(H: np.ndarray, g: np.ndarray, rank_tol: float = 1e-12) -> np.ndarray:
    """Solve ``H x = g`` for symmetric positive-definite ``H``.

    If the plain Cholesky factorization fails, a matrix whose smallest
    eigenvalue is below ``rank_tol`` times its largest is reported as
    singular; otherwise a diagonal jitter of ``1e-12 trace / n`` is added
    and the factorization retried.
    """
    try:
        return linalg.cho_solve(linalg.cho_factor(H), g)
    except linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(H)
    if not vals[-1] > 0 or vals[0] <= rank_tol * vals[-1]:
        null = vecs[:, 0]
        raise RankDeficiencyError(f"normal matrix is singular along {np.round(null, 6).tolist()}", null)
    n = H.shape[0]
    jitter = 1e-12 * np.trace(H) / n
    return linalg.cho_solve(linalg.cho_factor(H + jitter * np.eye(n)), g)


class WeightedLsProblem:
    """Stacked linear measurement blocks ``y_i = A_i x + e_i`` with ``e_i ~ N(0, Sigma_i)``.

    Parameters
    ----------
    A : array (N, m, d) or (N, d)
        Design blocks; a 2-D array means scalar measurements.
    y : array (N, m) or (N,)
    cov : None, float, array (N, m, m)
        Error covariance; a float is an isotropic variance shared by all blocks.
    """

    def __init__(self, A, y, cov=None):
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float)
        if A.ndim == 2:
            A = A[:, None, :]
        if y.ndim == 1:
            y = y[:, None]
        if A.shape[:2] != y.shape:
            raise DomainError(f"design {A.shape} and observations {y.shape} disagree")
        self.A, self.y = A, y
        if cov is None or np.ndim(cov) == 0:
            s = 1.0 if cov is None else float(cov)
            if not s > 0:
                raise DomainError("variance must be positive")
            self.Aw, self.yw = A / math.sqrt(s), y / math.sqrt(s)
        else:
            cov = np.asarray(cov, dtype=float)
            try:
                L = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise DomainError("covariances must be symmetric positive-definite") from None
            self.Aw = np.linalg.solve(L, A)
            self.yw = np.linalg.solve(L, y[..., None])[..., 0]

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[2]

    def errors(self, x) -> np.ndarray:
        return np.einsum("nmd,d->nm", self.Aw, x) - self.yw

    def residuals(self, x) -> np.ndarray:
        """Mahalanobis residual of every block."""
        return np.linalg.norm(self.errors(x), axis=1)

    def solve(self, weights, x=None) -> np.ndarray:
        return solve_weighted_linear(self, weights)


def solve_weighted_linear(problem: WeightedLsProblem, weights=None) -> np.ndarray:
    """Minimize ``sum_i w_i / 2 ||A_i x - y_i||^2_{Sigma_i^-1}``."""
    w = np.ones(problem.size) if weights is None else np.asarray(weights, dtype=float)
    H = np.einsum("n,nmd,nme->de", w, problem.Aw, problem.Aw)
    g = np.einsum("n,nmd,nm->d", w, problem.Aw, problem.yw)
    return solve_spd(H, g)


def irls(problem, kernel, init, tol: float = 1e-8, max_iter: int = 100):
    """Iteratively reweighted least squares from a prior estimate.

    ``kernel`` is any object with ``weight(eps)`` and ``rho(eps)``; if it
    also has ``refresh(eps)`` (adaptive kernels) it is re-fitted to the
    residuals before every weight computation.  Three consecutive increases
    of the robust objective flag divergence and the best iterate is
    returned.
    """
    x = np.asarray(init, dtype=float)
    report = SolverReport()
    best_x, best_obj = x, math.inf
    prev_obj, rises = math.inf, 0
    prev_w = None
    for it in range(1, max_iter + 1):
        eps = problem.residuals(x)
        if hasattr(kernel, "refresh"):
            kernel.refresh(eps)
        obj = float(np.sum(kernel.rho(eps)))
        if not math.isfinite(obj):
            raise DivergenceError(f"non-finite objective at IRLS iteration {it}")
        if obj < best_obj:
            best_x, best_obj = x, obj
        rises = rises + 1 if obj > prev_obj else 0
        prev_obj = obj
        if rises >= 3:
            report.diverged = True
            break
        w = np.asarray(kernel.weight(eps), dtype=float)
        if prev_w is not None and np.array_equal(w, prev_w):
            report.converged = True
            break
        x_new = problem.solve(w, x)
        step = float(np.linalg.norm(x_new - x))
        report.step_norms.append(step)
        report.iterations = it
        x, prev_w = x_new, w
        if step < tol:
            report.converged = True
            break
    final_obj = float(np.sum(kernel.rho(problem.residuals(x))))
    if report.diverged or final_obj > best_obj:
        x, final_obj = best_x, best_obj
    report.objective = final_obj
    return x, report


def gauss_newton_step(r, J, w) -> np.ndarray:
    """Weighted Gauss-Newton increment ``argmin sum w_i (r_i + J_i d)^2``."""
    wJ = J * w[:, None]
    return solve_spd(J.T @ wJ, -(wJ.T @ r))


def gauss_newton_se3(residual_fn, jacobian_fn, weights, init: Pose, tol=(1e-3, 1e-3), max_iter: int = 50):
    """Gauss-Newton on SE(3) with left-perturbation updates ``T <- exp(d^) T``.

    ``jacobian_fn(T)`` must be the derivative of ``residual_fn(T)`` with
    respect to that left perturbation.  Converges when the rotation and
    translation parts of the increment are below ``tol``.
    """
    T = init
    report = SolverReport()
    w = None if weights is None else np.asarray(weights, dtype=float)
    for it in range(1, max_iter + 1):
        r = residual_fn(T)
        ww = np.ones_like(r) if w is None else w
        report.objective = float(0.5 * np.sum(ww * r * r))
        if not np.any(r):
            report.converged = True
            return T, report
        d = gauss_newton_step(r, jacobian_fn(T), ww)
        report.step_norms.append(float(np.linalg.norm(d)))
        report.iterations = it
        T = (se3_exp(d) @ T).orthonormalized()
        if np.linalg.norm(d[:3]) < tol[0] and np.linalg.norm(d[3:]) < tol[1]:
            report.converged = True
            break
    r = residual_fn(T)
    report.objective = float(0.5 * np.sum((np.ones_like(r) if w is None else w) * r * r))
    return T, report
