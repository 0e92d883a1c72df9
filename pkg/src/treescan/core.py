"""Foundational geometric and sensor-model types.

Conventions used throughout the package:

* distances in meters, angles in radians, indices zero-based;
* LiDAR / robot body frames are x-forward, y-left, z-up;
* camera frame is z-forward, x-right, y-down (standard pinhole);
* headings are normalized to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

_ORTHONORMAL_TOL = 1e-9
#: Points closer to the image plane than this are treated as behind the camera.
MIN_PROJECTION_DEPTH = 1e-6


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.atan2(math.sin(theta), math.cos(theta))
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


class RingedPoint(NamedTuple):
    """A single LiDAR return: position, laser ring index, optional NDVI."""

    x: float
    y: float
    z: float
    ring_id: int
    ndvi: float | None = None


@dataclass(frozen=True)
class RingedPointCloud:
    """Timestamped point cloud carrying per-point ring indices and NDVI.

    Stored as parallel arrays for vectorized processing. ``ndvi`` uses NaN
    for points without a vegetation-index value.

    Attributes:
        timestamp: Acquisition time in seconds.
        xyz: Point coordinates, shape (N, 3), float64.
        ring_id: Laser ring index per point, shape (N,), int32.
        ndvi: NDVI per point in [-1, 1] or NaN, shape (N,), float64.
        frame_id: Symbolic name of the coordinate frame.
    """

    timestamp: float
    xyz: np.ndarray
    ring_id: np.ndarray
    ndvi: np.ndarray
    frame_id: str = "lidar"

    def __post_init__(self) -> None:
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        n = xyz.shape[0]
        ring = np.asarray(self.ring_id, dtype=np.int32).reshape(-1)
        ndvi = np.asarray(self.ndvi, dtype=np.float64).reshape(-1)
        if ring.shape[0] != n or ndvi.shape[0] != n:
            raise ValueError("xyz, ring_id and ndvi must have matching lengths")
        if n and ring.min() < 0:
            raise ValueError("ring_id must be non-negative")
        finite = ndvi[np.isfinite(ndvi)]
        if finite.size and (finite.min() < -1.0 - 1e-12 or finite.max() > 1.0 + 1e-12):
            raise ValueError("ndvi values must lie in [-1, 1]")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "ring_id", ring)
        object.__setattr__(self, "ndvi", ndvi)

    @classmethod
    def empty(cls, timestamp: float = 0.0, frame_id: str = "lidar") -> "RingedPointCloud":
        return cls(timestamp, np.empty((0, 3)), np.empty(0, dtype=np.int32),
                   np.empty(0), frame_id)

    @classmethod
    def from_points(cls, timestamp: float, points: list[RingedPoint],
                    frame_id: str = "lidar") -> "RingedPointCloud":
        xyz = np.array([[p.x, p.y, p.z] for p in points], dtype=np.float64).reshape(-1, 3)
        ring = np.array([p.ring_id for p in points], dtype=np.int32)
        ndvi = np.array([np.nan if p.ndvi is None else p.ndvi for p in points])
        return cls(timestamp, xyz, ring, ndvi, frame_id)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def point(self, i: int) -> RingedPoint:
        v = self.ndvi[i]
        return RingedPoint(float(self.xyz[i, 0]), float(self.xyz[i, 1]),
                           float(self.xyz[i, 2]), int(self.ring_id[i]),
                           None if np.isnan(v) else float(v))

    def select(self, mask_or_index: np.ndarray) -> "RingedPointCloud":
        """Sub-cloud containing the selected points, order preserved."""
        return RingedPointCloud(self.timestamp, self.xyz[mask_or_index],
                                self.ring_id[mask_or_index], self.ndvi[mask_or_index],
                                self.frame_id)


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform: p' = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHONORMAL_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = math.cos(yaw), math.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(r, np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array or a single 3-vector."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self @ other)(p) == self(other(p))."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with 5-coefficient radial-tangential distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    distortion: tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if len(self.distortion) != 5:
            raise ValueError("distortion must have 5 coefficients (k1,k2,p1,p2,k3)")


@dataclass(frozen=True)
class RobotPose:
    """Planar robot pose sample with commanded velocities.

    Attributes:
        timestamp: Sample time in seconds.
        x, y: Position in the planar odom/UTM frame, meters.
        theta: Heading in radians, normalized to (-pi, pi].
        v_x: Linear velocity along the body x axis, m/s.
        omega: Angular velocity, rad/s.
        degraded: True while positioning quality is flagged as unreliable.
    """

    timestamp: float
    x: float
    y: float
    theta: float
    v_x: float = 0.0
    omega: float = 0.0
    degraded: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", normalize_angle(self.theta))


def project_points(points: np.ndarray, cam: CameraModel
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points onto the image plane.

    Applies the pinhole model with radial-tangential distortion and rounds
    to the nearest pixel (NDVI lookup is nearest-pixel).

    Args:
        points: (N, 3) array in the camera frame (z forward).
        cam: Camera intrinsics.

    Returns:
        pixels: (N, 2) int array of (u, v) pixel coordinates. Rows for
            out-of-view points are undefined.
        in_view: (N,) bool array; False for points behind the camera or
            projecting outside [0, width) x [0, height).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = pts[:, 2]
    safe_z = np.where(z > MIN_PROJECTION_DEPTH, z, 1.0)
    xn = pts[:, 0] / safe_z
    yn = pts[:, 1] / safe_z

    k1, k2, p1, p2, k3 = cam.distortion
    r2 = xn * xn + yn * yn
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn)
    yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn

    u = np.rint(cam.fx * xd + cam.cx).astype(np.int64)
    v = np.rint(cam.fy * yd + cam.cy).astype(np.int64)
    in_view = ((z > MIN_PROJECTION_DEPTH)
               & (u >= 0) & (u < cam.width)
               & (v >= 0) & (v < cam.height))
    return np.stack([u, v], axis=1), in_view


def project_point(p, cam: CameraModel) -> tuple[int, int] | None:
    """Project a single camera-frame point; None when out of view."""
    pixels, in_view = project_points(np.asarray(p, dtype=np.float64).reshape(1, 3), cam)
    if not in_view[0]:
        return None
    return int(pixels[0, 0]), int(pixels[0, 1])


def transform_cloud(cloud: RingedPointCloud, transform: RigidTransform
                    ) -> RingedPointCloud:
    """Apply a rigid transform to every point; ring_id and ndvi are kept."""
    return replace(cloud, xyz=transform.apply(cloud.xyz))
