"""Point-cloud containers, I/O, downsampling, nearest neighbours and normals."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from agnc.errors import DomainError

DEFAULT_SIGMA = 0.03


@dataclass(frozen=True)
class PointCloud:
    """Points in meters; ``normals`` rows are unit vectors or NaN where invalid."""

    points: np.ndarray
    normals: np.ndarray | None = None
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if n.shape != pts.shape:
                raise DomainError("normals and points must have the same count")
            ok = np.all(np.isfinite(n), axis=1)
            if np.any(np.abs(np.linalg.norm(n[ok], axis=1) - 1.0) > 1e-6):
                raise DomainError("normals must be unit length")
            object.__setattr__(self, "normals", n)
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    def __len__(self):
        return self.points.shape[0]

    @property
    def valid_normals(self) -> np.ndarray:
        if self.normals is None:
            return np.zeros(len(self), dtype=bool)
        return np.all(np.isfinite(self.normals), axis=1)


def voxel_downsample(cloud: PointCloud, voxel: float = 0.1) -> PointCloud:
    """Replace the points in each occupied voxel by their centroid."""
    if not voxel > 0:
        raise DomainError("voxel size must be positive")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    sums = np.zeros((counts.size, 3))
    np.add.at(sums, inverse, cloud.points)
    return PointCloud(sums / counts[:, None], None, cloud.sigma)


class NearestIndex:
    """Exact Euclidean nearest-neighbour index (kd-tree)."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise DomainError("cannot index an empty cloud")
        self.points = pts
        self._tree = cKDTree(pts)

    def query(self, queries, k: int = 1):
        """Distances and indices of the ``k`` nearest points (exact, ``eps=0``)."""
        return self._tree.query(np.asarray(queries, dtype=float), k=k)


def build_index(cloud: PointCloud) -> NearestIndex:
    return NearestIndex(cloud.points)


def nearest(index: NearestIndex, query) -> int:
    _, i = index.query(np.asarray(query, dtype=float))
    return int(i)


def estimate_normals(cloud: PointCloud, k: int = 15, viewpoint=(0.0, 0.0, 0.0), rank_tol: float = 1e-6) -> PointCloud:
    """PCA normals from the ``k`` nearest neighbours, oriented toward ``viewpoint``.

    Neighbourhoods whose scatter has rank below 2 (collinear or coincident
    points) get a NaN normal and are skipped by point-to-plane residuals.
    """
    n_pts = len(cloud)
    if n_pts <= k:
        raise DomainError(f"need more than k={k} points, got {n_pts}")
    _, idx = NearestIndex(cloud.points).query(cloud.points, k=k)
    nbrs = cloud.points[idx]
    centred = nbrs - nbrs.mean(axis=1, keepdims=True)
    scatter = np.einsum("nki,nkj->nij", centred, centred) / k
    vals, vecs = np.linalg.eigh(scatter)
    normals = vecs[:, :, 0]
    degenerate = vals[:, 1] <= rank_tol * np.maximum(vals[:, 2], 1e-300)
    to_view = np.asarray(viewpoint, dtype=float) - cloud.points
    flip = np.einsum("ni,ni->n", normals, to_view) < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    normals[degenerate] = np.nan
    return replace(cloud, normals=normals)


def read_xyz(path, sigma: float = DEFAULT_SIGMA) -> PointCloud:
    """ASCII cloud, ``x y z`` per line (meters); extra columns are ignored."""
    data = np.loadtxt(path, ndmin=2, comments="#")
    if data.shape[1] < 3:
        raise DomainError(f"{path}: expected at least 3 columns")
    return PointCloud(data[:, :3], None, sigma)


def read_ply(path, sigma: float = DEFAULT_SIGMA) -> PointCloud:
    """ASCII PLY; only the vertex x/y/z properties are read."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise DomainError(f"{path}: not a PLY file")
    n_vertex, props, in_vertex, header_end = 0, [], False, None
    for i, line in enumerate(lines[1:], start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format" and parts[1] != "ascii":
            raise DomainError(f"{path}: only ASCII PLY is supported")
        if parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            props.append(parts[-1])
        elif parts[0] == "end_header":
            header_end = i
            break
    if header_end is None or not {"x", "y", "z"} <= set(props):
        raise DomainError(f"{path}: missing header or vertex x/y/z properties")
    cols = [props.index(c) for c in ("x", "y", "z")]
    body = lines[header_end + 1 : header_end + 1 + n_vertex]
    data = np.array([[float(v) for v in row.split()] for row in body]).reshape(-1, len(props))
    return PointCloud(data[:, cols], None, sigma)


def read_cloud(path, sigma: float = DEFAULT_SIGMA) -> PointCloud:
    return read_ply(path, sigma) if str(path).lower().endswith(".ply") else read_xyz(path, sigma)


def write_xyz(path, cloud: PointCloud):
    np.savetxt(path, cloud.points, fmt="%.9g")
