"""Per-tree height and width estimation from associated clusters.

Height: the sensor's fixed ring elevations sweep up a tree's crown as the
robot moves, so a change of the topmost ring hitting the cluster marks a
fresh look at the crown apex. The height reading is the cluster's top point
z plus the sensor mounting height (clusters stay in the sensor frame;
heights are relative to the wheel-contact plane). The running maximum is
kept.

Width: the cluster is split into equal-thickness z slices, the farthest 3D
point pair inside each slice is found, and the largest pair distance over
the slices is this scan's width. The running maximum is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

from .association import TreeLandmark
from .preprocess import TreeCluster

DEFAULT_WIDTH_SLICES = 10


@dataclass(frozen=True)
class LidarVerticalModel:
    """Vertical geometry of the spinning LiDAR.

    Defaults model a 16-ring unit spanning -15..+15 degrees in 2-degree
    steps, mounted ``sensor_height`` meters above the robot's ground-contact
    plane.
    """

    ring_count: int = 16
    ring_elevations: tuple[float, ...] = tuple(
        math.radians(-15.0 + 2.0 * k) for k in range(16))
    sensor_height: float = 0.5

    def __post_init__(self) -> None:
        if len(self.ring_elevations) != self.ring_count:
            raise ValueError("ring_elevations length must equal ring_count")
        diffs = np.diff(self.ring_elevations)
        if len(diffs) and diffs.min() <= 0:
            raise ValueError("ring_elevations must be strictly increasing")

    @property
    def max_ring(self) -> int:
        return self.ring_count - 1


def estimate_height(cluster: TreeCluster, landmark: TreeLandmark,
                    model: LidarVerticalModel) -> TreeLandmark:
    """Update a landmark's height estimate from one associated cluster.

    A height candidate h = z_top + sensor_height is taken when the
    cluster's top ring exceeds the best ring seen so far (a top-ring
    transition), and also whenever the top ring sits strictly below the
    sensor's highest ring, because then the crown apex lies inside the
    vertical field of view and z_top bounds it directly. The estimate is
    the running maximum of the candidates.

    ``fov_limited`` stays true until some scan observes the apex inside the
    field of view; a tree taller than the vertical FOV at every visited
    range keeps the flag and an underestimated height.
    """
    if len(cluster) == 0:
        return landmark
    top_ring = int(cluster.points.ring_id.max())
    z_top = float(cluster.points.xyz[:, 2].max())
    candidate = z_top + model.sensor_height

    take = False
    top_ring_seen = landmark.top_ring_seen
    fov_limited = landmark.fov_limited
    if top_ring > top_ring_seen:
        take = True
        if top_ring_seen < 0:
            # First look: flag until the apex is proven inside the FOV.
            fov_limited = top_ring >= model.max_ring
        top_ring_seen = top_ring
    if top_ring < model.max_ring:
        take = True
        fov_limited = False

    if not take:
        return replace(landmark, top_ring_seen=top_ring_seen, fov_limited=fov_limited)
    return replace(landmark, height_est=max(landmark.height_est, candidate),
                   top_ring_seen=top_ring_seen, fov_limited=fov_limited)


def sliced_width(points: np.ndarray, n_slices: int = DEFAULT_WIDTH_SLICES) -> float:
    """Largest farthest-pair distance over equal-thickness z slices.

    Slice boundaries span the points' own z extent. Slices with fewer than
    two points contribute zero. Distances are full 3D Euclidean norms and
    the farthest pair per slice is exact.
    """
    if n_slices < 1:
        raise ValueError("n_slices must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 2:
        return 0.0
    z = pts[:, 2]
    z_min, z_max = float(z.min()), float(z.max())
    if z_max <= z_min:
        return float(pdist(pts).max())
    bin_of = np.minimum((n_slices * (z - z_min) / (z_max - z_min)).astype(np.int64),
                        n_slices - 1)
    width = 0.0
    for b in range(n_slices):
        members = pts[bin_of == b]
        if members.shape[0] >= 2:
            width = max(width, float(pdist(members).max()))
    return width


def estimate_width(cluster: TreeCluster, landmark: TreeLandmark,
                   n_slices: int = DEFAULT_WIDTH_SLICES) -> TreeLandmark:
    """Update a landmark's width estimate from one associated cluster.

    The scan width is the z-sliced farthest-pair width of the cluster; the
    landmark keeps the running maximum across scans.
    """
    scan_width = sliced_width(cluster.points.xyz, n_slices)
    return replace(landmark, width_est=max(landmark.width_est, scan_width))
