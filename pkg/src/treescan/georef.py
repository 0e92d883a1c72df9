"""Georeferencing: landmarks to UTM coordinates and registry updates.

Landmarks live in the robot body frame; pairing a landmark's state snapshot
(taken when it was last observed) with the interpolated robot pose of that
instant maps it into the planar UTM-anchored world frame. Each landmark is
then assigned to the nearest registry tree in the x-y plane and overwrites
that record's estimated traits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .association import TreeLandmark
from .core import RigidTransform, RobotPose, normalize_angle
from .errors import EmptyMapError, StalePoseError

#: to_global refuses to extrapolate poses further than this, seconds.
POSE_STALENESS_LIMIT_S = 0.5


@dataclass
class GeoTreeRecord:
    """One georeferenced tree: fixed position/ground truth, updatable estimates."""

    tree_id: int
    utm_x: float
    utm_y: float
    gt_width: float | None = None
    gt_height: float | None = None
    est_width: float = 0.0
    est_height: float = 0.0
    est_ndvi_mean: float = 0.0
    match_count: int = 0
    last_update: float = 0.0


@dataclass(frozen=True)
class UtmDatum:
    """UTM zone label plus the local origin offset of the survey frame."""

    zone: str = "local"
    origin_x: float = 0.0
    origin_y: float = 0.0


@dataclass
class FieldMap:
    """Registry of georeferenced trees for one field."""

    records: list[GeoTreeRecord] = field(default_factory=list)
    datum: UtmDatum = field(default_factory=UtmDatum)

    def __post_init__(self) -> None:
        ids = [r.tree_id for r in self.records]
        if len(ids) != len(set(ids)):
            raise ValueError("tree_ids must be unique")

    def __len__(self) -> int:
        return len(self.records)

    def get(self, tree_id: int) -> GeoTreeRecord:
        for r in self.records:
            if r.tree_id == tree_id:
                return r
        raise KeyError(tree_id)

    def min_tree_spacing(self) -> float:
        """Smallest pairwise planar distance between records; inf if < 2."""
        if len(self.records) < 2:
            return math.inf
        xy = np.array([[r.utm_x, r.utm_y] for r in self.records])
        d2 = np.sum((xy[:, None, :] - xy[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        return float(np.sqrt(d2.min()))


class PoseInterpolator:
    """Linear position / shortest-arc heading interpolation over a pose log."""

    def __init__(self, poses: list[RobotPose]) -> None:
        if not poses:
            raise ValueError("pose log is empty")
        self.poses = sorted(poses, key=lambda p: p.timestamp)
        self._times = np.array([p.timestamp for p in self.poses])
        if len(self._times) > 1 and np.diff(self._times).min() <= 0:
            raise ValueError("pose timestamps must be strictly increasing")

    def at(self, t: float) -> RobotPose:
        """Pose at time t, interpolated between the bracketing samples.

        Raises:
            StalePoseError: If t falls further than 0.5 s outside the log.
        """
        times = self._times
        if t < times[0] - POSE_STALENESS_LIMIT_S or t > times[-1] + POSE_STALENESS_LIMIT_S:
            raise StalePoseError(f"no pose within {POSE_STALENESS_LIMIT_S} s of t={t:.3f}")
        idx = int(np.searchsorted(times, t))
        if idx == 0:
            return self.poses[0]
        if idx >= len(times):
            return self.poses[-1]
        lo, hi = self.poses[idx - 1], self.poses[idx]
        span = hi.timestamp - lo.timestamp
        w = 0.0 if span == 0 else (t - lo.timestamp) / span
        dtheta = normalize_angle(hi.theta - lo.theta)
        return RobotPose(timestamp=t,
                         x=lo.x + w * (hi.x - lo.x),
                         y=lo.y + w * (hi.y - lo.y),
                         theta=normalize_angle(lo.theta + w * dtheta),
                         v_x=lo.v_x, omega=lo.omega,
                         degraded=lo.degraded or hi.degraded)


def to_global(landmark: TreeLandmark, pose: RobotPose,
              lidar_to_base: RigidTransform | None = None) -> np.ndarray:
    """Map a landmark's observed centroid into UTM x-y via the robot pose.

    ``pose`` must correspond to the landmark's last observation time. When
    the landmark state was built from sensor-frame measurements, pass the
    sensor-to-body transform; states already in the body frame need none.
    """
    centroid = landmark.seen_state[:3]
    if lidar_to_base is not None:
        centroid = lidar_to_base.apply(centroid)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return np.array([pose.x + c * centroid[0] - s * centroid[1],
                     pose.y + s * centroid[0] + c * centroid[1]])


def nearest_record(fieldmap: FieldMap, xy: np.ndarray) -> tuple[GeoTreeRecord, float]:
    """Nearest registry record by planar distance; ties pick lower tree_id."""
    if len(fieldmap) == 0:
        raise EmptyMapError("field map has no records")
    best: GeoTreeRecord | None = None
    best_d = math.inf
    for rec in fieldmap.records:
        d = math.hypot(rec.utm_x - xy[0], rec.utm_y - xy[1])
        if d < best_d or (d == best_d and best is not None and rec.tree_id < best.tree_id):
            best, best_d = rec, d
    assert best is not None
    return best, best_d


def match_and_update(landmark: TreeLandmark, global_xy: np.ndarray,
                     fieldmap: FieldMap,
                     max_match_dist: float | None = None) -> int | None:
    """Assign a landmark to the nearest registry tree and overwrite its traits.

    The matched record receives the landmark's current width/height/NDVI
    estimates and its match_count grows. When the nearest record is farther
    than ``max_match_dist`` (default: half the minimum tree spacing of the
    map) the landmark stays unassigned and None is returned (an orphan).
    Record positions and ground-truth columns are never touched.

    Returns:
        The matched tree_id, or None for an orphan.

    Raises:
        EmptyMapError: If the map has no records.
    """
    if max_match_dist is None:
        max_match_dist = 0.5 * fieldmap.min_tree_spacing()
    record, dist = nearest_record(fieldmap, np.asarray(global_xy, dtype=np.float64))
    if dist > max_match_dist:
        return None
    record.est_width = landmark.width_est
    record.est_height = landmark.height_est
    record.est_ndvi_mean = float(landmark.seen_state[4])
    record.match_count += 1
    record.last_update = landmark.last_seen
    return record.tree_id
