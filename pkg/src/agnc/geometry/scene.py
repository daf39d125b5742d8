"""Synthetic registration scenes and initial-pose perturbations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from agnc.geometry.cloud import PointCloud, estimate_normals, voxel_downsample
from agnc.geometry.lie import Pose, se3_exp

# (rotation cap [rad], translation cap [m]) per difficulty
PRESETS = {
    "easy": (math.radians(10.0), 0.1),
    "medium": (math.radians(20.0), 0.5),
    "hard": (math.radians(45.0), 1.0),
}


def preset_sigmas(difficulty: str):
    """Per-axis standard deviations for a preset: half of each norm cap."""
    phi_max, rho_max = PRESETS[difficulty]
    return 0.5 * phi_max, 0.5 * rho_max


def _capped_gaussian(sigma, cap, rng):
    if sigma == 0:
        return np.zeros(3)
    while True:
        v = rng.normal(0.0, sigma, 3)
        if np.linalg.norm(v) < cap:
            return v


def sample_perturbation(sigma_phi, sigma_rho, phi_max, rho_max, rng) -> np.ndarray:
    """Isotropic Gaussian twist ``(phi, rho)``, redrawn until both norms are under their caps."""
    return np.concatenate([_capped_gaussian(sigma_phi, phi_max, rng), _capped_gaussian(sigma_rho, rho_max, rng)])


def sample_preset(difficulty: str, rng) -> np.ndarray:
    phi_max, rho_max = PRESETS[difficulty]
    s_phi, s_rho = preset_sigmas(difficulty)
    return sample_perturbation(s_phi, s_rho, phi_max, rho_max, rng)


@dataclass(frozen=True)
class SceneConfig:
    """Room corner: floor, two perpendicular walls and spheres resting on the floor.

    Overlap comes from occlusion: the surfaces are cut into square tiles
    and each tile is seen by both views, by ``P`` only or by ``Q`` only.
    With a shared-tile fraction ``s`` and the rest split evenly, the
    fraction of ``P`` also seen by ``Q`` is ``2 s / (1 + s)``; ``s`` is
    chosen so that equals the requested overlap.
    """

    length: float = 4.0
    width: float = 3.0
    height: float = 2.0
    n_spheres: int = 6
    sphere_radius: tuple = (0.25, 0.5)
    density: float = 400.0
    noise: float = 0.01
    voxel: float = 0.1
    tile: float = 0.5
    k_normals: int = 15


def _sample_rect(rng, density, origin, u, v):
    area = np.linalg.norm(u) * np.linalg.norm(v)
    n = rng.poisson(density * area)
    a, b = rng.random((2, n))
    return origin + a[:, None] * u + b[:, None] * v


def _sample_sphere(rng, density, centre, radius):
    n = rng.poisson(density * 4.0 * math.pi * radius**2)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = centre + radius * d
    return pts[pts[:, 2] > 0]


def _scene_surface(cfg: SceneConfig, rng, spheres):
    L, W, H = cfg.length, cfg.width, cfg.height
    z = np.zeros(3)
    parts = [
        _sample_rect(rng, cfg.density, z, np.array([L, 0, 0]), np.array([0, W, 0])),
        _sample_rect(rng, cfg.density, np.array([0, W, 0]), np.array([L, 0, 0]), np.array([0, 0, H])),
        _sample_rect(rng, cfg.density, z, np.array([0, W, 0]), np.array([0, 0, H])),
    ]
    parts += [_sample_sphere(rng, cfg.density, c, r) for c, r in spheres]
    pts = np.vstack(parts)
    return pts + rng.normal(0.0, cfg.noise, pts.shape)


def shared_tile_fraction(overlap: float) -> float:
    return overlap / (2.0 - overlap)


def _visibility(points, tile, overlap, rng):
    """Per-point visibility code: 0 shared, 1 P only, 2 Q only."""
    keys = np.floor(points / tile).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    s = shared_tile_fraction(overlap)
    u = rng.random(uniq.shape[0])
    code = np.where(u < s, 0, np.where(u < s + 0.5 * (1.0 - s), 1, 2))
    return code[inverse.ravel()]


def make_scene_pair(cfg: SceneConfig, overlap: float, rng, ground_truth: Pose | None = None):
    """Fixed cloud ``P`` (with normals) and moving cloud ``Q`` expressed in its own frame.

    Returns ``(P, Q, T)`` with ``p = T.C q + T.r`` for corresponding points.
    """
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    L, W = cfg.length, cfg.width
    lo, hi = cfg.sphere_radius
    spheres = []
    for _ in range(cfg.n_spheres):
        r = rng.uniform(lo, hi)
        spheres.append((np.array([rng.uniform(r, L - r), rng.uniform(r, W - r), r]), r))
    pts_p = _scene_surface(cfg, rng, spheres)
    pts_q = _scene_surface(cfg, rng, spheres)
    # one tile assignment shared by both views
    point_code = _visibility(np.vstack([pts_p, pts_q]), cfg.tile, overlap, rng)
    code_p, code_q = point_code[: len(pts_p)], point_code[len(pts_p) :]
    P = voxel_downsample(PointCloud(pts_p[code_p != 2]), cfg.voxel)
    Q_world = voxel_downsample(PointCloud(pts_q[code_q != 1]), cfg.voxel)
    if ground_truth is None:
        ground_truth = se3_exp(np.array([0.0, 0.0, 0.3, 0.4, 0.2, 0.05]))
    Q = PointCloud(ground_truth.inverse().apply(Q_world.points))
    # viewpoint inside the room so normals point into it
    P = estimate_normals(P, cfg.k_normals, viewpoint=(0.5 * L, 0.5 * W, 1.0))
    return P, Q, ground_truth
