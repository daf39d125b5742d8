"""Point-to-point and point-to-plane errors for registration.

The fixed cloud ``P`` and the moving cloud ``Q`` are related by
``p = C q + r``.  Point covariances are isotropic (``sigma**2 I``), so the
point-to-point error covariance ``C R_q C^T + R_p`` stays isotropic.
"""

from __future__ import annotations

import numpy as np

from agnc.geometry.lie import Pose


def error_covariance(T: Pose, R_p, R_q) -> np.ndarray:
    return T.C @ np.asarray(R_q) @ T.C.T + np.asarray(R_p)


def point_to_point_error(T: Pose, p, q, sigma_p: float = 0.03, sigma_q: float | None = None):
    """Errors ``p - (C q + r)`` and their Mahalanobis norms (vectorized over rows)."""
    sigma_q = sigma_p if sigma_q is None else sigma_q
    e = np.asarray(p, dtype=float) - T.apply(q)
    var = sigma_p**2 + sigma_q**2
    eps = np.sqrt(np.sum(e * e, axis=-1) / var)
    return e, eps


def point_to_point_error_full(T: Pose, p, q, R_p, R_q):
    """Single correspondence with full 3x3 point covariances."""
    e = np.asarray(p, dtype=float) - T.apply(q)
    S = error_covariance(T, R_p, R_q)
    return e, float(np.sqrt(e @ np.linalg.solve(S, e)))


def point_to_plane_residual(T: Pose, p, normal, q, sigma: float = 0.03, whiten: bool = True):
    """Signed plane distances ``n^T (p - (C q + r))`` and their left-perturbation Jacobians.

    With ``whiten`` the residual and Jacobian are divided by
    ``sqrt(n^T Sigma n) = sqrt(2) sigma``.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n = np.atleast_2d(np.asarray(normal, dtype=float))
    x = T.apply(np.atleast_2d(q))
    r = np.einsum("ni,ni->n", n, p - x)
    J = np.hstack([-np.cross(x, n), -n])
    if whiten:
        s = np.sqrt(2.0) * sigma
        r, J = r / s, J / s
    return r, J
