"""ICP benchmark over perturbation difficulty and overlap.

Every trial draws its own scene pair (or reuses user clouds) and one
initial-pose perturbation, then registers it with every method from the
same start.  A trial whose perturbation is exactly zero cannot satisfy the
strict success inequality; it is flagged ``degenerate`` and left out of the
summaries.
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
from agnc.geometry.cloud import estimate_normals, read_cloud, voxel_downsample
from agnc.geometry.icp import IcpLimits, icp, is_success, pose_errors
from agnc.geometry.lie import Pose, se3_exp
from agnc.geometry.scene import PRESETS, SceneConfig, make_scene_pair, sample_preset
from agnc.methods import METHODS, MethodSettings, check_methods

ROW_COLUMNS = (
    "method",
    "condition",
    "difficulty",
    "overlap",
    "trial",
    "init_rot_deg",
    "init_trans_cm",
    "rot_deg",
    "trans_cm",
    "iterations",
    "converged",
    "success",
    "degenerate",
    "failed",
    "wall_time",
    "time_per_iteration",
)

# plain least squares is a reference, not a robust baseline; select it with ``methods``
ICP_METHODS = tuple(m for m in METHODS if m != "Quadratic")


@dataclass
class IcpBenchConfig:
    """Benchmark grid.

    With ``cloud_p`` and ``cloud_q`` set, those clouds replace the synthetic
    scene; ``ground_truth`` (12 numbers, the top three rows of the 4x4
    transform, row-major) then maps ``Q`` coordinates into ``P``.
    """

    difficulties: tuple = ("easy", "medium", "hard")
    overlaps: tuple = (0.7,)
    trials: int = 20
    methods: tuple = ICP_METHODS
    seed: int = 0
    max_iterations: int = 50
    scene: SceneConfig = field(default_factory=SceneConfig)
    cloud_p: str | None = None
    cloud_q: str | None = None
    ground_truth: tuple | None = None
    threads: int = 1
    refresh_each_iteration: bool = True

    def __post_init__(self):
        self.difficulties = tuple(self.difficulties)
        self.overlaps = tuple(float(o) for o in self.overlaps)
        self.methods = tuple(check_methods(self.methods))
        bad = [d for d in self.difficulties if d not in PRESETS]
        if bad:
            raise ConfigurationError(f"unknown difficulties {bad}; choose from {list(PRESETS)}")
        if not self.difficulties:
            raise ConfigurationError("difficulties must not be empty")
        if any(not 0 <= o <= 1 for o in self.overlaps):
            raise ConfigurationError("overlaps must lie in [0, 1]")
        if self.trials < 1 or self.max_iterations < 1:
            raise ConfigurationError("trials and max_iterations must be positive")
        if (self.cloud_p is None) != (self.cloud_q is None):
            raise ConfigurationError("cloud_p and cloud_q must be given together")
        if self.cloud_p is not None and (self.ground_truth is None or len(self.ground_truth) != 12):
            raise ConfigurationError("user clouds need a 12-number ground_truth")
        if self.cloud_p is None and not self.overlaps:
            raise ConfigurationError("overlaps must not be empty")


def trial_rng(seed, difficulty_index, overlap_index, trial) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(difficulty_index), int(overlap_index), int(trial)]))


def _user_clouds(cfg: IcpBenchConfig):
    P = voxel_downsample(read_cloud(cfg.cloud_p), cfg.scene.voxel)
    P = estimate_normals(P, cfg.scene.k_normals)
    Q = voxel_downsample(read_cloud(cfg.cloud_q), cfg.scene.voxel)
    return P, Q, Pose.from_row(cfg.ground_truth)


def _run_trial(args):
    cfg, d_index, o_index, trial = args
    difficulty = cfg.difficulties[d_index]
    overlap = cfg.overlaps[o_index] if cfg.cloud_p is None else math.nan
    rng = trial_rng(cfg.seed, d_index, o_index, trial)
    if cfg.cloud_p is None:
        P, Q, T_gt = make_scene_pair(cfg.scene, overlap, rng)
        condition = f"{difficulty}/overlap={overlap!r}"
    else:
        P, Q, T_gt = _user_clouds(cfg)
        condition = f"{difficulty}/clouds"
    xi = sample_preset(difficulty, rng)
    T0 = T_gt @ se3_exp(xi)
    rot0 = math.degrees(float(np.linalg.norm(xi[:3])))
    trans0 = float(np.linalg.norm(xi[3:]))
    degenerate = rot0 == 0.0 or trans0 == 0.0
    limits = IcpLimits(max_iterations=cfg.max_iterations)
    rows, stages = [], []
    for name in cfg.methods:
        row = {
            "method": name,
            "condition": condition,
            "difficulty": difficulty,
            "overlap": overlap,
            "trial": trial,
            "init_rot_deg": rot0,
            "init_trans_cm": 100.0 * trans0,
            "degenerate": degenerate,
        }
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = icp(P, Q, T0, name, MethodSettings(tau=None, refresh_each_iteration=cfg.refresh_each_iteration), limits)
        rot, trans = pose_errors(result.pose, T_gt)
        row.update(
            rot_deg=rot,
            trans_cm=100.0 * trans,
            iterations=result.iterations,
            converged=result.converged,
            success=False if degenerate else is_success(xi, (rot, trans), result, limits),
            failed=result.error.replace("\n", " "),
            wall_time=result.wall_time,
            time_per_iteration=result.wall_time / max(result.iterations, 1),
        )
        rows.append(row)
        for it, stage_rows in result.stage_log:
            for stage, mu, f, obj, inliers in stage_rows:
                stages.append(
                    {"method": name, "condition": condition, "trial": trial, "iteration": it, "stage": stage, "mu": mu, "f": f, "objective": obj, "inliers": inliers}
                )
    return rows, stages


def run_icp_bench(cfg: IcpBenchConfig) -> ExperimentReport:
    """Every method on ``trials`` perturbations per (difficulty, overlap) cell."""
    n_overlaps = len(cfg.overlaps) if cfg.cloud_p is None else 1
    jobs = [(cfg, d, o, t) for d in range(len(cfg.difficulties)) for o in range(n_overlaps) for t in range(cfg.trials)]
    report = ExperimentReport(ROW_COLUMNS, ("rot_deg", "trans_cm"))
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    for rows, stages in results:
        report.rows.extend(rows)
        report.stages.extend(stages)
    return report
