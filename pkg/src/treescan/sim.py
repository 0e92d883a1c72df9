"""Deterministic synthetic orchard and sensor simulator.

Produces scan/image/pose streams with per-tree ground truth for desk-scale
validation of the detection pipeline. Trees are modeled as a vertical trunk
cylinder topped by an opaque crown ellipsoid on a flat ground plane, so ray
intersections, true widths (2 * crown radius), and true heights
(trunk + crown) are all analytic. Every output is a pure function of the
specs and a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CameraModel, RigidTransform, RingedPointCloud, RobotPose, normalize_angle
from .errors import InfeasibleSpecError
from .fusion import RgnFrame
from .georef import FieldMap, GeoTreeRecord, UtmDatum
from .traits import LidarVerticalModel

DEFAULT_AZIMUTH_STEPS = 900  # 0.4 degree horizontal resolution
DEFAULT_MAX_RANGE = 30.0

#: NDVI of non-crown surfaces in the rendered scene.
GROUND_NDVI = 0.0
TRUNK_NDVI = 0.1
SKY_NDVI = -0.5


@dataclass(frozen=True)
class TreeShape:
    """Parametric tree: trunk cylinder plus crown ellipsoid."""

    trunk_height: float = 0.8
    trunk_radius: float = 0.10
    crown_height: float = 1.82
    crown_radius_max: float = 1.355
    leaf_ndvi_mean: float = 0.6
    leaf_ndvi_std: float = 0.05

    def __post_init__(self) -> None:
        if min(self.trunk_height, self.trunk_radius, self.crown_height,
               self.crown_radius_max) <= 0:
            raise ValueError("all tree dimensions must be positive")

    @property
    def total_height(self) -> float:
        return self.trunk_height + self.crown_height

    @property
    def width(self) -> float:
        return 2.0 * self.crown_radius_max

    @property
    def crown_center_z(self) -> float:
        return self.trunk_height + 0.5 * self.crown_height


def _default_row_shapes() -> tuple[TreeShape, TreeShape]:
    # Two stock citrus-like shapes so the default grid is not perfectly uniform.
    front = TreeShape(trunk_height=0.8, crown_height=1.82, crown_radius_max=1.355,
                      leaf_ndvi_mean=0.55)
    back = TreeShape(trunk_height=0.8, crown_height=1.94, crown_radius_max=1.335,
                     leaf_ndvi_mean=0.62)
    return front, back


@dataclass(frozen=True)
class OrchardSpec:
    """Grid of parametric trees on flat ground (z = 0).

    Tree (r, c) sits at (origin_x + c * spacing_x, origin_y + r * spacing_y)
    with tree_id = r * cols + c. ``trees`` may list one shape per tree
    (rows * cols entries); by default each grid row reuses a stock shape.
    """

    rows: int = 2
    cols: int = 3
    spacing_x: float = 5.0
    spacing_y: float = 5.0
    origin_x: float = 8.0
    origin_y: float = 3.0
    trees: tuple[TreeShape, ...] = ()

    def __post_init__(self) -> None:
        if self.rows < 0 or self.cols < 0:
            raise ValueError("grid counts must be non-negative")
        if self.spacing_x <= 0 or self.spacing_y <= 0:
            raise ValueError("spacings must be positive")
        if not self.trees:
            stock = _default_row_shapes()
            shapes = tuple(stock[r % len(stock)]
                           for r in range(self.rows) for _ in range(self.cols))
            object.__setattr__(self, "trees", shapes)
        elif len(self.trees) != self.rows * self.cols:
            raise ValueError("trees must have rows * cols entries")

    @property
    def tree_count(self) -> int:
        return self.rows * self.cols

    def tree_position(self, tree_id: int) -> tuple[float, float]:
        r, c = divmod(tree_id, self.cols)
        return (self.origin_x + c * self.spacing_x, self.origin_y + r * self.spacing_y)


@dataclass(frozen=True)
class TrajectorySpec:
    """Survey path specification.

    ``start_x``/``start_y``/``start_theta`` shift the whole path, which is
    useful for varying the phase of scan timing relative to the field.
    """

    path_type: str = "straight"
    v_x: float = 0.5
    omega: float = 1.0
    goal_distance: float = 23.0
    scan_rate: float = 10.0
    frame_rate: float = 10.0
    start_x: float = 0.0
    start_y: float = 0.0
    start_theta: float = 0.0
    turn_margin: float = 3.0

    def __post_init__(self) -> None:
        if self.v_x <= 0 or self.scan_rate <= 0 or self.frame_rate <= 0:
            raise ValueError("v_x, scan_rate and frame_rate must be positive")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.path_type not in ("straight", "s_type", "n_type"):
            raise ValueError(f"unknown path type: {self.path_type!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor and positioning noise for desk-scale realism.

    ``degraded_windows`` lists (start, end) time intervals whose pose
    samples are flagged as GNSS-degraded; flags never change any random
    stream, so runs differing only in windows see identical sensor data.
    """

    range_sigma: float = 0.02
    pose_xy_sigma: float = 0.0005
    pose_theta_sigma: float = 0.0002
    ndvi_sigma: float = 0.02
    dropout_prob: float = 0.05
    wind_sway_amplitude: float = 0.03
    wind_sway_freq: float = 1.0
    degraded_windows: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        scalars = (self.range_sigma, self.pose_xy_sigma, self.pose_theta_sigma,
                   self.ndvi_sigma, self.dropout_prob, self.wind_sway_amplitude,
                   self.wind_sway_freq)
        if any(v < 0 for v in scalars):
            raise ValueError("noise magnitudes must be non-negative")

    @classmethod
    def zero(cls) -> "NoiseSpec":
        return cls(range_sigma=0.0, pose_xy_sigma=0.0, pose_theta_sigma=0.0,
                   ndvi_sigma=0.0, dropout_prob=0.0, wind_sway_amplitude=0.0)

    def is_degraded(self, t: float) -> bool:
        return any(start <= t <= end for start, end in self.degraded_windows)


def default_lidar_to_cam() -> RigidTransform:
    """Extrinsics of a forward-looking camera co-located with the LiDAR.

    Maps LiDAR-frame coordinates (x forward, y left, z up) into camera-frame
    coordinates (z forward, x right, y down).
    """
    return RigidTransform(np.array([[0.0, -1.0, 0.0],
                                    [0.0, 0.0, -1.0],
                                    [1.0, 0.0, 0.0]]), np.zeros(3))


def default_camera() -> CameraModel:
    """Desk-scale forward camera: 256x192 at 90 degree horizontal FOV."""
    return CameraModel(fx=128.0, fy=128.0, cx=128.0, cy=96.0, width=256, height=192)


def derive_seed(base: int, *keys: int) -> np.random.Generator:
    """Deterministic child generator for a (base seed, key...) tuple."""
    return np.random.default_rng(np.random.SeedSequence((base, *keys)))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def _path_segments(spec: TrajectorySpec, orchard: OrchardSpec
                   ) -> tuple[list[tuple[float, float, float]], tuple[float, float, float]]:
    """Build (v, omega, duration) segments and the path's start pose."""
    v, w = spec.v_x, spec.omega
    radius = v / w
    quarter = (math.pi / 2.0) / w

    if spec.path_type == "straight":
        start = (spec.start_x, spec.start_y, spec.start_theta)
        return [(v, 0.0, spec.goal_distance / v)], start

    # Serpentine and N paths run lanes mid-gap around the tree rows.
    if orchard.spacing_y < 2.0 * radius + 0.6:
        raise InfeasibleSpecError("row gap is too narrow for the robot to turn in")
    lane0 = orchard.origin_y - 0.5 * orchard.spacing_y
    lane_last = orchard.origin_y + (orchard.rows - 0.5) * orchard.spacing_y
    x_lo = min(0.0, orchard.origin_x - spec.turn_margin)
    x_hi = orchard.origin_x + (orchard.cols - 1) * orchard.spacing_x + spec.turn_margin
    pass_len = x_hi - x_lo
    start = (x_lo + spec.start_x, lane0 + spec.start_y, spec.start_theta)

    segments: list[tuple[float, float, float]] = []
    if spec.path_type == "s_type":
        n_lanes = orchard.rows + 1
        connector = (orchard.spacing_y - 2.0 * radius) / v
        for lane in range(n_lanes):
            segments.append((v, 0.0, pass_len / v))
            if lane == n_lanes - 1:
                break
            turn = w if lane % 2 == 0 else -w  # left off odd passes, right off even
            segments.append((v, turn, quarter))
            segments.append((v, 0.0, connector))
            segments.append((v, turn, quarter))
        return segments, start

    # n_type: lane0 pass, diagonal back across the field, top lane pass.
    # The diagonal must thread the grid without clipping a crown, so the
    # turn-arc displacement is solved exactly and the chord is checked
    # against every tree; both diagonal corners are searched until the
    # corridor clears.
    clearance = max((s.crown_radius_max for s in orchard.trees), default=0.5) + 0.8
    solution = None
    span = x_hi - x_lo
    extras = sorted(np.arange(-(span - 2.0), 15.1, 0.25), key=abs)
    max_shift = max(0.0, span - 4.0)  # keep a useful top-lane pass
    for shift in np.arange(0.0, max_shift + 0.01, 0.25):
        for extra in extras:
            corner_a = (x_hi + float(extra), lane0)
            if corner_a[0] <= x_lo + spec.start_x + 1.0:
                continue
            corner_b = (x_lo + float(shift), lane_last)
            phi, diag_len, chord_a, chord_b = _solve_n_diagonal(
                corner_a, corner_b, radius)
            if not (math.pi / 4 <= phi <= math.pi - 1e-6) or diag_len <= 0:
                continue
            if _corridor_clear(orchard, chord_a, chord_b, clearance):
                solution = (corner_a, corner_b, phi, diag_len)
                break
        if solution:
            break
    if solution is None:
        raise InfeasibleSpecError("no collision-free diagonal for the n path")
    corner_a, corner_b, phi, diag_len = solution
    segments.append((v, 0.0, (corner_a[0] - (x_lo + spec.start_x)) / v))
    segments.append((v, w, phi / w))
    segments.append((v, 0.0, diag_len / v))
    segments.append((v, -w, phi / w))
    segments.append((v, 0.0, (x_hi - corner_b[0]) / v))
    return segments, start


def _solve_n_diagonal(corner_a: tuple[float, float], corner_b: tuple[float, float],
                      radius: float) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Heading and length of the straight diagonal between two N-path corners.

    Both turn arcs displace the path by radius*(sin phi, 1 - cos phi), so the
    chord heading phi satisfies a fixed-point equation; a few iterations
    converge far below the integrator step size.
    """
    dx = corner_b[0] - corner_a[0]
    dy = corner_b[1] - corner_a[1]
    phi = math.atan2(dy, dx)
    for _ in range(30):
        rx = dx - 2.0 * radius * math.sin(phi)
        ry = dy - 2.0 * radius * (1.0 - math.cos(phi))
        phi_next = math.atan2(ry, rx)
        if abs(phi_next - phi) < 1e-12:
            phi = phi_next
            break
        phi = phi_next
    length = math.hypot(dx - 2.0 * radius * math.sin(phi),
                        dy - 2.0 * radius * (1.0 - math.cos(phi)))
    chord_a = np.array([corner_a[0] + radius * math.sin(phi),
                        corner_a[1] + radius * (1.0 - math.cos(phi))])
    chord_b = chord_a + length * np.array([math.cos(phi), math.sin(phi)])
    return phi, length, chord_a, chord_b


def _corridor_clear(orchard: OrchardSpec, a: np.ndarray, b: np.ndarray,
                    clearance: float) -> bool:
    """True when every tree stays at least ``clearance`` from segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    for tree_id in range(orchard.tree_count):
        p = np.array(orchard.tree_position(tree_id))
        t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
        if np.linalg.norm(a + t * ab - p) < clearance:
            return False
    return True


def generate_trajectory(spec: TrajectorySpec, orchard: OrchardSpec,
                        noise: NoiseSpec | None = None, seed: int = 0
                        ) -> list[RobotPose]:
    """Integrate the survey path into a pose log at scan_rate granularity.

    Pose samples carry the commanded (v, omega) of their segment; positional
    noise is an additive per-step random walk. Degraded flags come from the
    noise spec's windows and never consume randomness.
    """
    noise = noise or NoiseSpec.zero()
    segments, (x, y, theta) = _path_segments(spec, orchard)
    dt = 1.0 / spec.scan_rate
    total = sum(d for _, _, d in segments)
    n_steps = int(round(total / dt))
    rng = derive_seed(seed, 0x705E)

    drift = np.zeros(3)
    poses: list[RobotPose] = []
    seg_idx, seg_used = 0, 0.0
    for k in range(n_steps + 1):
        t = k * dt
        v_cur, w_cur = segments[min(seg_idx, len(segments) - 1)][:2]
        poses.append(RobotPose(timestamp=t, x=x + drift[0], y=y + drift[1],
                               theta=normalize_angle(theta + drift[2]),
                               v_x=v_cur, omega=w_cur,
                               degraded=noise.is_degraded(t)))
        if k == n_steps:
            break
        # advance one step, switching segments mid-step where they end;
        # closed-form unicycle arcs keep turn geometry exact
        remaining = dt
        while remaining > 1e-12 and seg_idx < len(segments):
            v_seg, w_seg, duration = segments[seg_idx]
            step = min(remaining, duration - seg_used)
            if w_seg == 0.0:
                x += v_seg * math.cos(theta) * step
                y += v_seg * math.sin(theta) * step
            else:
                r = v_seg / w_seg
                x += r * (math.sin(theta + w_seg * step) - math.sin(theta))
                y -= r * (math.cos(theta + w_seg * step) - math.cos(theta))
                theta = normalize_angle(theta + w_seg * step)
            seg_used += step
            remaining -= step
            if seg_used >= duration - 1e-12:
                seg_idx += 1
                seg_used = 0.0
        if noise.pose_xy_sigma > 0 or noise.pose_theta_sigma > 0:
            step_noise = rng.normal(0.0, 1.0, size=3)
            drift[0] += noise.pose_xy_sigma * step_noise[0]
            drift[1] += noise.pose_xy_sigma * step_noise[1]
            drift[2] += noise.pose_theta_sigma * step_noise[2]
    return poses


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

def _ray_plane_z0(origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Hit distances of rays against z = 0; NaN for misses."""
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -origin[2] / dz
    t = np.where((dz < -1e-12) & (t > 1e-6), t, np.nan)
    return t


def _ray_cylinder(origin: np.ndarray, dirs: np.ndarray, center_xy: np.ndarray,
                  radius: float, z_top: float) -> np.ndarray:
    """Hit distances against a vertical cylinder capped at [0, z_top]."""
    ox = origin[0] - center_xy[0]
    oy = origin[1] - center_xy[1]
    dx, dy = dirs[:, 0], dirs[:, 1]
    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        sqrt_disc = np.sqrt(disc)
        t = (-b - sqrt_disc) / (2.0 * a)
        z = origin[2] + t * dirs[:, 2]
        ok = (disc >= 0) & (a > 1e-12) & (t > 1e-6) & (z >= 0.0) & (z <= z_top)
    return np.where(ok, t, np.nan)


def _ray_ellipsoid(origin: np.ndarray, dirs: np.ndarray, center: np.ndarray,
                   semi: np.ndarray) -> np.ndarray:
    """Hit distances against an axis-aligned ellipsoid; NaN for misses."""
    q = (origin - center) / semi
    w = dirs / semi
    a = np.einsum("ij,ij->i", w, w)
    b = 2.0 * (w @ q)
    c = float(q @ q) - 1.0
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        sqrt_disc = np.sqrt(disc)
        t = (-b - sqrt_disc) / (2.0 * a)
        ok = (disc >= 0) & (t > 1e-6)
    return np.where(ok, t, np.nan)


class OrchardScene:
    """Analytic scene built once per survey; renders scans and RGN frames."""

    # hit classes
    SKY, GROUND, TRUNK, CROWN = -1, 0, 1, 2

    def __init__(self, orchard: OrchardSpec, noise: NoiseSpec, seed: int) -> None:
        self.orchard = orchard
        self.noise = noise
        self.seed = seed
        n = orchard.tree_count
        self.positions = np.array([orchard.tree_position(i) for i in range(n)],
                                  dtype=np.float64).reshape(n, 2)
        self.shapes = list(orchard.trees)
        # fixed per-tree sway phases so crown motion is continuous in time
        phase_rng = derive_seed(seed, 0x57A7)
        self.sway_phase = phase_rng.uniform(0.0, 2.0 * math.pi, size=(n, 2))

    def _crown_centers(self, t: float) -> np.ndarray:
        centers = np.empty((len(self.shapes), 3))
        centers[:, 0] = self.positions[:, 0]
        centers[:, 1] = self.positions[:, 1]
        centers[:, 2] = [s.crown_center_z for s in self.shapes]
        amp = self.noise.wind_sway_amplitude
        if amp > 0:
            arg = 2.0 * math.pi * self.noise.wind_sway_freq * t
            centers[:, 0] += amp * np.sin(arg + self.sway_phase[:, 0])
            centers[:, 1] += amp * np.sin(arg + self.sway_phase[:, 1])
        return centers

    def cast(self, origin: np.ndarray, dirs: np.ndarray, t: float,
             max_range: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest hit for each ray.

        Returns:
            dist: (N,) hit distances, NaN for sky/out-of-range.
            hit_class: (N,) int, one of SKY/GROUND/TRUNK/CROWN.
            tree_index: (N,) int, the tree hit (or -1).
        """
        n = dirs.shape[0]
        best = _ray_plane_z0(origin, dirs)
        hit_class = np.where(np.isfinite(best), self.GROUND, self.SKY)
        tree_index = np.full(n, -1, dtype=np.int64)

        crowns = self._crown_centers(t)
        for i, shape in enumerate(self.shapes):
            t_trunk = _ray_cylinder(origin, dirs, self.positions[i],
                                    shape.trunk_radius, shape.trunk_height)
            closer = np.isfinite(t_trunk) & (~np.isfinite(best) | (t_trunk < best))
            best = np.where(closer, t_trunk, best)
            hit_class = np.where(closer, self.TRUNK, hit_class)
            tree_index = np.where(closer, i, tree_index)

            semi = np.array([shape.crown_radius_max, shape.crown_radius_max,
                             0.5 * shape.crown_height])
            t_crown = _ray_ellipsoid(origin, dirs, crowns[i], semi)
            closer = np.isfinite(t_crown) & (~np.isfinite(best) | (t_crown < best))
            best = np.where(closer, t_crown, best)
            hit_class = np.where(closer, self.CROWN, hit_class)
            tree_index = np.where(closer, i, tree_index)

        out = ~np.isfinite(best) | (best > max_range)
        best = np.where(out, np.nan, best)
        hit_class = np.where(out, self.SKY, hit_class)
        tree_index = np.where(out, -1, tree_index)
        return best, hit_class, tree_index


def _scan_ray_table(lidar: LidarVerticalModel, azimuth_steps: int
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Sensor-frame unit directions and ring ids for one full sweep."""
    azimuths = np.arange(azimuth_steps) * (2.0 * math.pi / azimuth_steps)
    elevations = np.asarray(lidar.ring_elevations)
    cos_e = np.cos(elevations)[:, None]
    sin_e = np.sin(elevations)[:, None]
    dirs = np.empty((lidar.ring_count, azimuth_steps, 3))
    dirs[:, :, 0] = cos_e * np.cos(azimuths)[None, :]
    dirs[:, :, 1] = cos_e * np.sin(azimuths)[None, :]
    dirs[:, :, 2] = sin_e
    rings = np.repeat(np.arange(lidar.ring_count, dtype=np.int32), azimuth_steps)
    return dirs.reshape(-1, 3), rings


def render_scan(orchard: OrchardSpec, pose: RobotPose, lidar: LidarVerticalModel,
                noise: NoiseSpec, seed: int,
                azimuth_steps: int = DEFAULT_AZIMUTH_STEPS,
                max_range: float = DEFAULT_MAX_RANGE,
                scene: OrchardScene | None = None) -> RingedPointCloud:
    """Render one LiDAR sweep from a pose, in the sensor frame.

    Rays are cast ring-major against ground, trunks, and swaying crowns;
    the nearest hit within range becomes a point with Gaussian range noise
    and Bernoulli dropout. Identical inputs give bit-identical clouds.
    """
    scene = scene or OrchardScene(orchard, noise, seed)
    dirs_sensor, rings = _scan_ray_table(lidar, azimuth_steps)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dirs_world = dirs_sensor.copy()
    dirs_world[:, 0] = c * dirs_sensor[:, 0] - s * dirs_sensor[:, 1]
    dirs_world[:, 1] = s * dirs_sensor[:, 0] + c * dirs_sensor[:, 1]
    origin = np.array([pose.x, pose.y, lidar.sensor_height])

    dist, _, _ = scene.cast(origin, dirs_world, pose.timestamp, max_range)

    rng = derive_seed(seed, 0x5CA9, int(round(pose.timestamp * 1e6)))
    keep_draw = rng.random(dirs_world.shape[0])
    range_noise = rng.normal(0.0, 1.0, size=dirs_world.shape[0])

    hit = np.isfinite(dist)
    if noise.dropout_prob > 0:
        hit &= keep_draw >= noise.dropout_prob
    dist_noisy = dist + noise.range_sigma * range_noise
    xyz = dirs_sensor[hit] * dist_noisy[hit, None]
    return RingedPointCloud(pose.timestamp, xyz, rings[hit],
                            np.full(int(hit.sum()), np.nan), frame_id="lidar")


_CLASS_REFLECTANCE_SUM = {OrchardScene.GROUND: 0.6, OrchardScene.TRUNK: 0.5,
                          OrchardScene.CROWN: 0.8, OrchardScene.SKY: 0.4}


def render_rgn(orchard: OrchardSpec, pose: RobotPose, cam: CameraModel,
               noise: NoiseSpec, seed: int,
               lidar_to_cam: RigidTransform | None = None,
               sensor_height: float = 0.5,
               max_range: float = DEFAULT_MAX_RANGE,
               scene: OrchardScene | None = None) -> RgnFrame:
    """Render one RGN frame geometrically consistent with render_scan.

    Every pixel ray is cast against the same analytic scene; the hit class
    fixes an NDVI value (crown pixels use the tree's leaf NDVI plus texture
    noise, ground is ~0, sky is ~-0.5) which is converted back into NIR/red
    channel intensities, so compute_ndvi recovers it exactly when noise is
    zero.
    """
    scene = scene or OrchardScene(orchard, noise, seed)
    lidar_to_cam = lidar_to_cam or default_lidar_to_cam()
    cam_to_lidar = lidar_to_cam.inverse()

    us, vs = np.meshgrid(np.arange(cam.width, dtype=np.float64),
                         np.arange(cam.height, dtype=np.float64))
    dirs_cam = np.stack([(us.ravel() - cam.cx) / cam.fx,
                         (vs.ravel() - cam.cy) / cam.fy,
                         np.ones(cam.width * cam.height)], axis=1)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=1, keepdims=True)
    dirs_lidar = dirs_cam @ cam_to_lidar.rotation.T

    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dirs_world = dirs_lidar.copy()
    dirs_world[:, 0] = c * dirs_lidar[:, 0] - s * dirs_lidar[:, 1]
    dirs_world[:, 1] = s * dirs_lidar[:, 0] + c * dirs_lidar[:, 1]
    cam_origin_lidar = cam_to_lidar.translation
    origin = np.array([
        pose.x + c * cam_origin_lidar[0] - s * cam_origin_lidar[1],
        pose.y + s * cam_origin_lidar[0] + c * cam_origin_lidar[1],
        sensor_height + cam_origin_lidar[2]])

    _, hit_class, tree_index = scene.cast(origin, dirs_world, pose.timestamp,
                                          max_range)

    rng = derive_seed(seed, 0x96E, int(round(pose.timestamp * 1e6)))
    ndvi = np.full(hit_class.shape[0], SKY_NDVI)
    ndvi[hit_class == OrchardScene.GROUND] = GROUND_NDVI
    ndvi[hit_class == OrchardScene.TRUNK] = TRUNK_NDVI
    crown = hit_class == OrchardScene.CROWN
    if crown.any():
        means = np.array([sh.leaf_ndvi_mean for sh in scene.shapes])
        stds = np.array([sh.leaf_ndvi_std for sh in scene.shapes])
        texture = rng.normal(0.0, 1.0, size=int(crown.sum()))
        idx = tree_index[crown]
        ndvi[crown] = means[idx] + stds[idx] * texture
    if noise.ndvi_sigma > 0:
        ndvi = ndvi + rng.normal(0.0, noise.ndvi_sigma, size=ndvi.shape[0])
    ndvi = np.clip(ndvi, -1.0, 1.0)

    refl = np.array([_CLASS_REFLECTANCE_SUM[OrchardScene.SKY]] * hit_class.shape[0])
    for cls, value in _CLASS_REFLECTANCE_SUM.items():
        refl[hit_class == cls] = value
    nir = 0.5 * refl * (1.0 + ndvi)
    red = 0.5 * refl * (1.0 - ndvi)
    green = 0.4 * refl

    shape = (cam.height, cam.width)
    return RgnFrame(timestamp=pose.timestamp, red=red.reshape(shape),
                    green=green.reshape(shape), nir=nir.reshape(shape))


# ---------------------------------------------------------------------------
# Survey stream and ground truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurveySample:
    """One simulator step: a pose, its scan, and the freshest camera frame."""

    index: int
    pose: RobotPose
    cloud: RingedPointCloud
    frame: RgnFrame | None


@dataclass(frozen=True)
class SurveySpec:
    """Bundle of everything that defines one simulated survey."""

    orchard: OrchardSpec = field(default_factory=OrchardSpec)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    lidar: LidarVerticalModel = field(default_factory=LidarVerticalModel)
    camera: CameraModel = field(default_factory=default_camera)
    azimuth_steps: int = DEFAULT_AZIMUTH_STEPS
    max_range: float = DEFAULT_MAX_RANGE


def build_fieldmap(orchard: OrchardSpec, datum: UtmDatum | None = None) -> FieldMap:
    """Ground-truth registry: true positions, widths, and heights per tree."""
    records = []
    for tree_id in range(orchard.tree_count):
        x, y = orchard.tree_position(tree_id)
        shape = orchard.trees[tree_id]
        records.append(GeoTreeRecord(tree_id=tree_id, utm_x=x, utm_y=y,
                                     gt_width=shape.width,
                                     gt_height=shape.total_height))
    return FieldMap(records=records, datum=datum or UtmDatum())


def simulate_survey(spec: SurveySpec, seed: int = 0):
    """Yield SurveySamples for a whole survey, scan by scan.

    Camera frames are rendered at ``frame_rate``; each sample carries the
    most recent frame at or before its scan time (frames are shared between
    samples when the camera runs slower than the LiDAR).
    """
    poses = generate_trajectory(spec.trajectory, spec.orchard, spec.noise, seed)
    scene = OrchardScene(spec.orchard, spec.noise, seed)
    frame_dt = 1.0 / spec.trajectory.frame_rate
    pose_lookup = _StreamPoseLookup(poses)

    last_frame: RgnFrame | None = None
    last_frame_idx = -1
    for k, pose in enumerate(poses):
        frame_idx = int(math.floor(pose.timestamp / frame_dt + 1e-9))
        if frame_idx > last_frame_idx:
            frame_time = frame_idx * frame_dt
            frame_pose = pose_lookup.at(frame_time)
            last_frame = render_rgn(spec.orchard, frame_pose, spec.camera,
                                    spec.noise, seed,
                                    sensor_height=spec.lidar.sensor_height,
                                    max_range=spec.max_range, scene=scene)
            last_frame_idx = frame_idx
        cloud = render_scan(spec.orchard, pose, spec.lidar, spec.noise, seed,
                            azimuth_steps=spec.azimuth_steps,
                            max_range=spec.max_range, scene=scene)
        yield SurveySample(index=k, pose=pose, cloud=cloud, frame=last_frame)


class _StreamPoseLookup:
    """Linear interpolation over an in-order pose list (no staleness gate)."""

    def __init__(self, poses: list[RobotPose]) -> None:
        self.poses = poses
        self.times = np.array([p.timestamp for p in poses])

    def at(self, t: float) -> RobotPose:
        idx = int(np.searchsorted(self.times, t))
        if idx <= 0:
            return self.poses[0]
        if idx >= len(self.poses):
            return self.poses[-1]
        lo, hi = self.poses[idx - 1], self.poses[idx]
        if abs(lo.timestamp - t) < 1e-9:
            return lo
        span = hi.timestamp - lo.timestamp
        w = (t - lo.timestamp) / span if span else 0.0
        dtheta = normalize_angle(hi.theta - lo.theta)
        return RobotPose(timestamp=t, x=lo.x + w * (hi.x - lo.x),
                         y=lo.y + w * (hi.y - lo.y),
                         theta=normalize_angle(lo.theta + w * dtheta),
                         v_x=lo.v_x, omega=lo.omega, degraded=lo.degraded)
