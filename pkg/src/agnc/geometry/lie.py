"""SO(3)/SE(3) exponential and logarithm maps.

Twists are 6-vectors ordered ``(phi, rho)``: rotation first (radians),
then translation (meters).  Pose updates use the left perturbation
``T <- exp(xi^) T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from agnc.errors import DomainError

_SMALL = 1e-8


def hat(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < _SMALL:
        return np.eye(3) + K + 0.5 * K @ K
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * K @ K


def so3_log(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    theta = rotation_angle(C)
    if theta >= math.pi - 1e-6:
        raise DomainError("rotation angle too close to pi for a unique logarithm")
    if theta < _SMALL:
        return vee(C - C.T) * 0.5
    return vee(C - C.T) * (0.5 * theta / math.sin(theta))


def _left_jacobian(phi) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < _SMALL:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    a = (1.0 - math.cos(theta)) / theta**2
    b = (theta - math.sin(theta)) / theta**3
    return np.eye(3) + a * K + b * K @ K


def _left_jacobian_inv(phi) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < _SMALL:
        return np.eye(3) - 0.5 * K + K @ K / 12.0
    half = 0.5 * theta
    c = (1.0 - half / math.tan(half)) / theta**2
    return np.eye(3) - 0.5 * K + c * K @ K


def orthonormalize(C) -> np.ndarray:
    U, _, Vt = np.linalg.svd(C)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> C x + r``."""

    C: np.ndarray
    r: np.ndarray

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3].copy(), T[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.C
        T[:3, 3] = self.r
        return T

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.C @ other.C, self.C @ other.r + self.r)

    def inverse(self) -> "Pose":
        return Pose(self.C.T, -self.C.T @ self.r)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points) @ self.C.T + self.r

    def orthonormalized(self) -> "Pose":
        return Pose(orthonormalize(self.C), self.r)

    def as_row(self) -> np.ndarray:
        """12 numbers, rotation and translation row-major: ``C[0], r[0], C[1], r[1], ...``."""
        return self.matrix()[:3].ravel()

    @classmethod
    def from_row(cls, values):
        return cls.from_matrix(np.vstack([np.asarray(values, dtype=float).reshape(3, 4), [0, 0, 0, 1]]))


def se3_exp(xi) -> Pose:
    xi = np.asarray(xi, dtype=float)
    phi, rho = xi[:3], xi[3:]
    return Pose(so3_exp(phi), _left_jacobian(phi) @ rho)


def se3_log(T: Pose) -> np.ndarray:
    phi = so3_log(T.C)
    return np.concatenate([phi, _left_jacobian_inv(phi) @ T.r])


def rotation_angle(C) -> float:
    """Geodesic angle of a rotation (radians).

    ``atan2`` of the sine and cosine parts keeps full precision near 0,
    where ``acos`` of the trace loses half the digits.
    """
    C = np.asarray(C, dtype=float)
    s = 0.5 * float(np.linalg.norm(vee(C - C.T)))
    c = 0.5 * (float(np.trace(C)) - 1.0)
    return math.atan2(s, c)


def pose_distance(a: Pose, b: Pose) -> float:
    """Rotation geodesic plus translation norm between two poses."""
    return rotation_angle(a.C.T @ b.C) + float(np.linalg.norm(a.r - b.r))
