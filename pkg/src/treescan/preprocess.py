"""Ground removal, downsampling, and Euclidean clustering.

Turns a fused (NDVI-bearing) point cloud into candidate tree clusters:
radial crop, seeded RANSAC ground-plane removal, voxel-grid downsampling
that keeps the member point nearest each voxel centroid, and single-linkage
Euclidean clustering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import RingedPointCloud
from .errors import DegenerateInputError

#: Max angle between the fitted plane normal and vertical for the plane to
#: count as ground.
GROUND_NORMAL_MAX_TILT = math.radians(30.0)


@dataclass(frozen=True)
class ClusterParams:
    """Tunables for the scan preprocessing stage.

    Attributes:
        ransac_distance_threshold: Inlier distance to the ground plane, m.
        ransac_iterations: Number of RANSAC hypotheses.
        voxel_leaf: Downsampling voxel edge length, m.
        cluster_tolerance: Single-linkage connection distance, m.
        min_cluster_points: Smallest cluster kept.
        max_cluster_points: Largest cluster kept.
        crop_range: Radial crop around the sensor, m.
        min_plane_inlier_fraction: Minimum fraction of points the ground
            plane must explain before any removal happens.
    """

    ransac_distance_threshold: float = 0.05
    ransac_iterations: int = 200
    voxel_leaf: float = 0.10
    cluster_tolerance: float = 0.5
    min_cluster_points: int = 30
    max_cluster_points: int = 50000
    crop_range: float = 20.0
    min_plane_inlier_fraction: float = 0.15

    def __post_init__(self) -> None:
        positive = (self.ransac_distance_threshold, self.ransac_iterations,
                    self.voxel_leaf, self.cluster_tolerance, self.min_cluster_points,
                    self.max_cluster_points, self.crop_range)
        if any(v <= 0 for v in positive):
            raise ValueError("all ClusterParams values must be positive")
        if self.min_cluster_points >= self.max_cluster_points:
            raise ValueError("min_cluster_points must be < max_cluster_points")


@dataclass(frozen=True)
class TreeCluster:
    """One connected component of vegetation points from a single scan."""

    points: RingedPointCloud
    cluster_id: int
    source_timestamp: float

    def __len__(self) -> int:
        return len(self.points)

    def centroid(self) -> np.ndarray:
        return self.points.xyz.mean(axis=0)

    def ndvi_mean(self) -> float | None:
        """Mean NDVI over NDVI-bearing points; None when no point has one."""
        values = self.points.ndvi[np.isfinite(self.points.ndvi)]
        if values.size == 0:
            return None
        return float(values.mean())


def crop_cloud(cloud: RingedPointCloud, crop_range: float) -> RingedPointCloud:
    """Keep points within ``crop_range`` meters of the sensor origin."""
    if len(cloud) == 0:
        return cloud
    dist = np.linalg.norm(cloud.xyz, axis=1)
    return cloud.select(dist <= crop_range)


def _fit_plane_lsq(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares plane through points: returns (unit normal, centroid)."""
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    normal = vt[-1]
    if normal[2] < 0:
        normal = -normal
    return normal, centroid


def remove_ground(cloud: RingedPointCloud, params: ClusterParams,
                  seed: int = 0) -> RingedPointCloud:
    """Remove the dominant ground plane from a scan via seeded RANSAC.

    Fits one plane; inliers (within ``ransac_distance_threshold``) are
    removed only when the plane explains at least
    ``min_plane_inlier_fraction`` of the cloud and its normal is within 30
    degrees of vertical, so walls and tree flanks are never deleted. The
    same seed always yields the same result.

    Raises:
        DegenerateInputError: If the cloud holds fewer than 3 points.
    """
    n = len(cloud)
    if n < 3:
        raise DegenerateInputError("ground removal needs at least 3 points")

    rng = np.random.default_rng(seed)
    pts = cloud.xyz
    # All hypotheses drawn up-front so inlier counting is one vectorized pass.
    samples = rng.integers(0, n, size=(params.ransac_iterations, 3))
    a = pts[samples[:, 0]]
    b = pts[samples[:, 1]]
    c = pts[samples[:, 2]]
    normals = np.cross(b - a, c - a)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    if not ok.any():
        return cloud
    normals = normals[ok] / norms[ok, None]
    anchors = a[ok]

    # distances: (hypotheses, points)
    offsets = np.einsum("hj,hj->h", normals, anchors)
    dists = np.abs(np.einsum("hj,nj->hn", normals, pts) - offsets[:, None])
    inlier_counts = (dists <= params.ransac_distance_threshold).sum(axis=1)
    best = int(np.argmax(inlier_counts))

    inliers = dists[best] <= params.ransac_distance_threshold
    if inliers.sum() < 3:
        return cloud
    # Refine on the consensus set; keeps the plane stable under range noise.
    normal, centroid = _fit_plane_lsq(pts[inliers])
    refined = np.abs((pts - centroid) @ normal) <= params.ransac_distance_threshold

    quorum = max(3, int(math.ceil(params.min_plane_inlier_fraction * n)))
    if refined.sum() < quorum:
        return cloud
    if abs(normal[2]) < math.cos(GROUND_NORMAL_MAX_TILT):
        return cloud
    return cloud.select(~refined)


def downsample(cloud: RingedPointCloud, leaf: float) -> RingedPointCloud:
    """Voxel-grid downsampling keeping one input point per occupied voxel.

    Each occupied voxel emits the member point nearest the voxel centroid,
    so ring_id and NDVI survive untouched and every output point is an
    input point.
    """
    if leaf <= 0:
        raise ValueError("leaf size must be positive")
    n = len(cloud)
    if n == 0:
        return cloud

    keys = np.floor(cloud.xyz / leaf).astype(np.int64)
    _, voxel_of, counts = np.unique(keys, axis=0, return_inverse=True,
                                    return_counts=True)
    sums = np.zeros((counts.size, 3))
    np.add.at(sums, voxel_of, cloud.xyz)
    centroids = sums / counts[:, None]
    d2 = np.einsum("ij,ij->i", cloud.xyz - centroids[voxel_of],
                   cloud.xyz - centroids[voxel_of])
    # Stable winner per voxel: sort by (voxel, distance, index) and take firsts.
    order = np.lexsort((np.arange(n), d2, voxel_of))
    first = np.ones(n, dtype=bool)
    first[1:] = voxel_of[order][1:] != voxel_of[order][:-1]
    chosen = np.sort(order[first])
    return cloud.select(chosen)


def euclidean_cluster(cloud: RingedPointCloud, params: ClusterParams
                      ) -> list[TreeCluster]:
    """Partition a cloud into single-linkage components at the tolerance.

    Components with a point count outside [min_cluster_points,
    max_cluster_points] are discarded. Clusters are ordered by descending
    size (ties broken by smallest member index) and ``cluster_id`` follows
    that order.
    """
    n = len(cloud)
    if n == 0:
        return []

    parent = np.arange(n)

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    tree = cKDTree(cloud.xyz)
    for i, j in tree.query_pairs(params.cluster_tolerance):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    roots = np.fromiter((find(i) for i in range(n)), dtype=np.int64, count=n)
    groups: dict[int, np.ndarray] = {}
    for root in np.unique(roots):
        members = np.flatnonzero(roots == root)
        if params.min_cluster_points <= members.size <= params.max_cluster_points:
            groups[int(root)] = members

    ordered = sorted(groups.values(), key=lambda m: (-m.size, m[0]))
    return [TreeCluster(points=cloud.select(members), cluster_id=k,
                        source_timestamp=cloud.timestamp)
            for k, members in enumerate(ordered)]
