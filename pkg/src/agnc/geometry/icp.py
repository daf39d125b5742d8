"""Iterative closest point with robust or GNC weighting.

Each iteration associates every fixed point to its nearest moving point,
weights the correspondences from their point-to-point Mahalanobis
distances, and takes a weighted Gauss-Newton step on point-to-plane
residuals.  GNC methods run their full stage schedule on every set of
correspondences.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from agnc.errors import DomainError, FittingError, RankDeficiencyError
from agnc.geometry.cloud import NearestIndex, PointCloud
from agnc.geometry.lie import Pose, se3_exp, se3_log
from agnc.geometry.residuals import point_to_plane_residual, point_to_point_error
from agnc.gnc import run_gnc
from agnc.methods import MethodSettings, is_gnc, make_gnc_rule, make_kernel
from agnc.solvers import gauss_newton_step


@dataclass
class IcpLimits:
    max_iterations: int = 50
    rotation_tol: float = 1e-3
    translation_tol: float = 1e-3
    max_distance: float | None = None


@dataclass
class IcpResult:
    pose: Pose
    iterations: int = 0
    converged: bool = False
    error: str = ""
    wall_time: float = 0.0
    gnc_stages: list = field(default_factory=list)
    stage_log: list = field(default_factory=list)
    alphas: list = field(default_factory=list)


class CorrespondenceProblem:
    """Fixed correspondences seen as a weighted problem over the pose.

    ``residuals`` are point-to-point Mahalanobis distances (what the robust
    weights see); ``solve`` is one weighted Gauss-Newton step on the
    point-to-plane residuals.
    """

    def __init__(self, p, normals, q, sigma):
        self.p, self.n, self.q, self.sigma = p, normals, q, sigma

    @property
    def size(self):
        return self.p.shape[0]

    def residuals(self, T: Pose):
        return point_to_point_error(T, self.p, self.q, self.sigma)[1]

    def solve(self, weights, T: Pose):
        r, J = point_to_plane_residual(T, self.p, self.n, self.q, self.sigma)
        d = gauss_newton_step(r, J, np.asarray(weights, dtype=float))
        return (se3_exp(d) @ T).orthonormalized()


def icp(P: PointCloud, Q: PointCloud, T0: Pose, method: str = "Quadratic", settings: MethodSettings | None = None, limits: IcpLimits | None = None) -> IcpResult:
    """Register ``Q`` onto ``P`` starting from ``T0`` (``p = C q + r``).

    Solver failures (degenerate geometry, failed fits) end the run with
    ``converged=False`` and the message in ``error``.
    """
    settings = settings or MethodSettings(tau=None)
    limits = limits or IcpLimits()
    if P.normals is None:
        raise DomainError("the fixed cloud needs normals")
    valid = P.valid_normals
    p, normals = P.points[valid], P.normals[valid]
    if p.shape[0] == 0 or len(Q) == 0:
        raise DomainError("empty cloud")
    index = NearestIndex(Q.points)
    kernel = None if is_gnc(method) else make_kernel(method, settings)
    T = T0
    info = None
    result = IcpResult(T0)
    t0 = time.perf_counter()
    try:
        for it in range(1, limits.max_iterations + 1):
            dist, idx = index.query(T.inverse().apply(p))
            keep = np.ones(p.shape[0], dtype=bool) if limits.max_distance is None else dist <= limits.max_distance
            if np.count_nonzero(keep) < 6:
                raise RankDeficiencyError("fewer than 6 correspondences")
            problem = CorrespondenceProblem(p[keep], normals[keep], Q.points[idx[keep]], P.sigma)
            if kernel is None:
                if info is None or settings.refresh_each_iteration:
                    info = make_gnc_rule(method, problem.residuals(T), settings)
                gnc = run_gnc(problem, info.rule, T)
                T_new = gnc.state
                result.gnc_stages.append(len(gnc.stages))
                result.stage_log.append((it, gnc.stage_rows()))
                result.alphas.append(info.alpha_star)
            else:
                eps = problem.residuals(T)
                if hasattr(kernel, "refresh") and (it == 1 or settings.refresh_each_iteration):
                    kernel.refresh(eps)
                T_new = problem.solve(kernel.weight(eps), T)
            step = se3_log(T_new @ T.inverse())
            T = T_new
            result.iterations = it
            if np.linalg.norm(step[:3]) < limits.rotation_tol and np.linalg.norm(step[3:]) < limits.translation_tol:
                result.converged = True
                break
    except (RankDeficiencyError, FittingError, DomainError, FloatingPointError) as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    result.pose = T
    result.wall_time = time.perf_counter() - t0
    return result


def pose_errors(estimate: Pose, truth: Pose):
    """Rotation (deg) and translation (m) norms of ``log(truth^-1 estimate)``."""
    try:
        xi = se3_log(truth.inverse() @ estimate)
    except DomainError:
        return 180.0, float(np.linalg.norm(truth.r - estimate.r))
    return math.degrees(float(np.linalg.norm(xi[:3]))), float(np.linalg.norm(xi[3:]))


def is_success(initial_twist, final_errors, result: IcpResult, limits: IcpLimits) -> bool:
    """Both final errors below the initial perturbation and the run converged before the cap."""
    rot0 = math.degrees(float(np.linalg.norm(initial_twist[:3])))
    trans0 = float(np.linalg.norm(initial_twist[3:]))
    rot, trans = final_errors
    return bool(rot < rot0 and trans < trans0 and result.converged and result.iterations < limits.max_iterations)
