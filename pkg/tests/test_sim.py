"""Tests for the synthetic orchard simulator."""

import math

import numpy as np
import pytest

from treescan.core import RobotPose
from treescan.errors import InfeasibleSpecError
from treescan.fusion import compute_ndvi, threshold_mask
from treescan.sim import (NoiseSpec, OrchardScene, OrchardSpec, SurveySpec,
                          TrajectorySpec, TreeShape, build_fieldmap,
                          default_camera, default_lidar_to_cam,
                          generate_trajectory, render_rgn, render_scan,
                          simulate_survey)
from treescan.traits import LidarVerticalModel


def short_tree(height=1.1, crown_radius=0.8, ndvi=0.6, ndvi_std=0.0):
    # trunk 0.3 + crown fills the rest
    return TreeShape(trunk_height=0.3, trunk_radius=0.08,
                     crown_height=height - 0.3, crown_radius_max=crown_radius,
                     leaf_ndvi_mean=ndvi, leaf_ndvi_std=ndvi_std)


def single_tree_orchard(shape=None, x=4.0, y=0.0):
    return OrchardSpec(rows=1, cols=1, origin_x=x, origin_y=y,
                       trees=(shape or short_tree(),))


def empty_orchard():
    return OrchardSpec(rows=0, cols=0)


class TestTrajectory:
    def test_straight_endpoint(self):
        poses = generate_trajectory(TrajectorySpec(), OrchardSpec(),
                                    NoiseSpec.zero(), seed=0)
        assert len(poses) == 461
        end = poses[-1]
        assert math.hypot(end.x, end.y) == pytest.approx(23.0, abs=1e-6)
        assert end.timestamp == pytest.approx(46.0)

    def test_s_type_turn_backs(self):
        poses = generate_trajectory(TrajectorySpec(path_type="s_type"),
                                    OrchardSpec(), NoiseSpec.zero(), seed=0)
        headings = np.array([p.theta for p in poses])
        # two U-turns means the heading sweeps past +pi/2 at least twice
        crossings = np.sum(np.diff(np.sign(np.abs(headings) - math.pi / 2)) != 0)
        assert crossings >= 2

    def test_n_type_reaches_far_lane(self):
        orchard = OrchardSpec()
        poses = generate_trajectory(TrajectorySpec(path_type="n_type"), orchard,
                                    NoiseSpec.zero(), seed=0)
        ys = [p.y for p in poses]
        lane_last = orchard.origin_y + (orchard.rows - 0.5) * orchard.spacing_y
        assert max(ys) == pytest.approx(lane_last, abs=0.1)

    def test_paths_clear_all_trees(self):
        orchard = OrchardSpec()
        trees = np.array([orchard.tree_position(i)
                          for i in range(orchard.tree_count)])
        for path in ("straight", "s_type", "n_type"):
            poses = generate_trajectory(TrajectorySpec(path_type=path), orchard,
                                        NoiseSpec.zero(), seed=0)
            xy = np.array([[p.x, p.y] for p in poses])
            gaps = np.linalg.norm(xy[:, None, :] - trees[None, :, :], axis=2)
            assert gaps.min() > 1.355 + 0.5, path

    def test_deterministic_given_seed(self):
        spec = TrajectorySpec(path_type="s_type")
        noise = NoiseSpec()
        a = generate_trajectory(spec, OrchardSpec(), noise, seed=11)
        b = generate_trajectory(spec, OrchardSpec(), noise, seed=11)
        assert a == b

    def test_narrow_gap_infeasible(self):
        orchard = OrchardSpec(spacing_y=1.2)
        with pytest.raises(InfeasibleSpecError):
            generate_trajectory(TrajectorySpec(path_type="s_type"), orchard)

    def test_degraded_windows_flag_poses(self):
        noise = NoiseSpec.zero()
        noise = NoiseSpec(range_sigma=0, pose_xy_sigma=0, pose_theta_sigma=0,
                          ndvi_sigma=0, dropout_prob=0, wind_sway_amplitude=0,
                          degraded_windows=((10.0, 20.0),))
        poses = generate_trajectory(TrajectorySpec(), OrchardSpec(), noise, seed=0)
        flags = [p.degraded for p in poses]
        assert flags[105] and not flags[95] and not flags[205]

    def test_windows_do_not_change_noise_stream(self):
        base = NoiseSpec()
        windowed = NoiseSpec(degraded_windows=((5.0, 15.0),))
        a = generate_trajectory(TrajectorySpec(), OrchardSpec(), base, seed=4)
        b = generate_trajectory(TrajectorySpec(), OrchardSpec(), windowed, seed=4)
        assert all(pa.x == pb.x and pa.y == pb.y and pa.theta == pb.theta
                   for pa, pb in zip(a, b))


def ray_hits_ellipsoid(origin, direction, center, semi):
    """Independent quadratic-root oracle for ray/ellipsoid intersection."""
    q = (np.asarray(origin) - np.asarray(center)) / semi
    w = np.asarray(direction) / semi
    a = w @ w
    b = 2 * q @ w
    c = q @ q - 1.0
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    t = (-b - math.sqrt(disc)) / (2 * a)
    return t if t > 1e-9 else None


class TestRenderScan:
    def pose(self, x=0.0, y=0.0, theta=0.0, t=0.0):
        return RobotPose(timestamp=t, x=x, y=y, theta=theta)

    def test_flat_ground_only(self):
        lidar = LidarVerticalModel()
        cloud = render_scan(empty_orchard(), self.pose(), lidar,
                            NoiseSpec.zero(), seed=0)
        assert len(cloud) > 0
        # sensor frame: the ground plane sits exactly at -sensor_height
        world_z = cloud.xyz[:, 2] + lidar.sensor_height
        assert np.abs(world_z).max() < 1e-9

    def test_flat_ground_with_noise_bounded(self):
        noise = NoiseSpec(range_sigma=0.02, dropout_prob=0.0,
                          wind_sway_amplitude=0.0)
        lidar = LidarVerticalModel()
        cloud = render_scan(empty_orchard(), self.pose(), lidar, noise, seed=1)
        world_z = cloud.xyz[:, 2] + lidar.sensor_height
        within = np.abs(world_z) <= 3 * noise.range_sigma
        assert within.mean() > 0.99

    def test_max_crown_ring_matches_quadratic_oracle(self):
        shape = short_tree(height=1.1, crown_radius=0.6)
        orchard = single_tree_orchard(shape, x=4.0, y=0.0)
        lidar = LidarVerticalModel()
        cloud = render_scan(orchard, self.pose(), lidar, NoiseSpec.zero(), seed=0)

        crown_floor = shape.trunk_height - lidar.sensor_height
        crown_points = cloud.xyz[:, 2] > crown_floor + 0.01
        got = int(cloud.ring_id[crown_points].max())

        center = np.array([4.0, 0.0, shape.crown_center_z])
        semi = np.array([0.6, 0.6, 0.5 * shape.crown_height])
        origin = np.array([0.0, 0.0, lidar.sensor_height])
        expected = max(
            ring for ring, elev in enumerate(lidar.ring_elevations)
            if ray_hits_ellipsoid(origin,
                                  [math.cos(elev), 0.0, math.sin(elev)],
                                  center, semi) is not None)
        assert got == expected
        # and the quantized apex elevation is within one ring of that
        apex_elev = math.atan2(shape.total_height - lidar.sensor_height, 4.0)
        apex_ring = max(r for r, e in enumerate(lidar.ring_elevations)
                        if e <= apex_elev)
        assert abs(got - apex_ring) <= 1

    def test_deterministic(self):
        orchard = single_tree_orchard()
        noise = NoiseSpec()
        a = render_scan(orchard, self.pose(t=2.0), LidarVerticalModel(), noise, 7)
        b = render_scan(orchard, self.pose(t=2.0), LidarVerticalModel(), noise, 7)
        assert np.array_equal(a.xyz, b.xyz)
        assert np.array_equal(a.ring_id, b.ring_id)

    def test_dropout_reduces_count(self):
        orchard = empty_orchard()
        full = render_scan(orchard, self.pose(), LidarVerticalModel(),
                           NoiseSpec.zero(), seed=0)
        holey = render_scan(orchard, self.pose(), LidarVerticalModel(),
                            NoiseSpec(dropout_prob=0.5), seed=0)
        assert len(holey) < len(full)

    def test_ray_budget(self):
        cloud = render_scan(OrchardSpec(), self.pose(), LidarVerticalModel(),
                            NoiseSpec.zero(), seed=0)
        assert len(cloud) <= 16 * 900


class TestRenderRgn:
    def test_crown_ndvi_recoverable_when_noiseless(self):
        shape = short_tree(height=1.6, crown_radius=0.8, ndvi=0.6, ndvi_std=0.0)
        orchard = single_tree_orchard(shape, x=4.0, y=0.0)
        pose = RobotPose(timestamp=0.0, x=0.0, y=0.0, theta=0.0)
        frame = render_rgn(orchard, pose, default_camera(), NoiseSpec.zero(),
                           seed=0)
        ndvi = compute_ndvi(frame).ndvi
        crown_pixels = np.isclose(ndvi, 0.6, atol=1e-6)
        assert crown_pixels.sum() > 50
        # sky pixels carry the negative background index and mask out
        masked = threshold_mask(compute_ndvi(frame))
        sky = np.isclose(ndvi, -0.5, atol=1e-6)
        assert sky.sum() > 0
        assert not masked.mask[sky].any()

    def test_projection_consistency_with_scan(self):
        """Crown LiDAR points land on vegetation pixels when projected."""
        from treescan.core import project_points

        shape = short_tree(height=1.6, crown_radius=0.8, ndvi=0.6, ndvi_std=0.0)
        orchard = single_tree_orchard(shape, x=6.0, y=0.0)
        pose = RobotPose(timestamp=0.0, x=0.0, y=0.0, theta=0.0)
        lidar = LidarVerticalModel()
        cam = default_camera()
        noise = NoiseSpec.zero()
        cloud = render_scan(orchard, pose, lidar, noise, seed=0)
        frame = render_rgn(orchard, pose, cam, noise, seed=0,
                           sensor_height=lidar.sensor_height)
        masked = threshold_mask(compute_ndvi(frame))

        crown = cloud.xyz[:, 2] > shape.trunk_height - lidar.sensor_height + 0.05
        crown_cloud = cloud.select(crown)
        cam_pts = default_lidar_to_cam().apply(crown_cloud.xyz)
        pixels, in_view = project_points(cam_pts, cam)
        assert in_view.sum() > 30
        on_mask = masked.mask[pixels[in_view, 1], pixels[in_view, 0]]
        assert on_mask.mean() >= 0.95

    def test_deterministic(self):
        orchard = single_tree_orchard()
        pose = RobotPose(timestamp=1.0, x=0.0, y=0.0, theta=0.0)
        a = render_rgn(orchard, pose, default_camera(), NoiseSpec(), seed=3)
        b = render_rgn(orchard, pose, default_camera(), NoiseSpec(), seed=3)
        assert np.array_equal(a.nir, b.nir) and np.array_equal(a.red, b.red)


class TestSurveyStream:
    def test_ground_truth_fieldmap(self):
        orchard = OrchardSpec()
        fieldmap = build_fieldmap(orchard)
        assert len(fieldmap) == 6
        rec = fieldmap.get(0)
        assert rec.gt_width == pytest.approx(2.71)
        assert rec.gt_height == pytest.approx(2.62)
        assert (rec.utm_x, rec.utm_y) == orchard.tree_position(0)
        back = fieldmap.get(5)
        assert back.gt_width == pytest.approx(2.67)
        assert back.gt_height == pytest.approx(2.74)

    def test_stream_pairs_frames(self):
        spec = SurveySpec(orchard=single_tree_orchard(),
                          trajectory=TrajectorySpec(goal_distance=1.0),
                          noise=NoiseSpec.zero())
        samples = list(simulate_survey(spec, seed=0))
        assert len(samples) == 21
        for s in samples:
            assert s.frame is not None
            assert s.frame.timestamp <= s.cloud.timestamp + 1e-9
            assert s.cloud.timestamp - s.frame.timestamp < 0.2

    def test_wind_sway_moves_crowns_continuously(self):
        noise = NoiseSpec(range_sigma=0.0, dropout_prob=0.0,
                          wind_sway_amplitude=0.2, wind_sway_freq=0.5)
        scene = OrchardScene(single_tree_orchard(), noise, seed=5)
        c0 = scene._crown_centers(0.0)
        c1 = scene._crown_centers(0.5)
        assert np.linalg.norm(c1 - c0) > 0.01
        assert np.linalg.norm(scene._crown_centers(0.0) - c0) == 0.0
