"""Tests for core geometry and sensor-model types."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treescan.core import (CameraModel, RigidTransform, RingedPoint,
                           RingedPointCloud, RobotPose, normalize_angle,
                           project_point, project_points, transform_cloud)


def make_camera(**kw):
    base = dict(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
    base.update(kw)
    return CameraModel(**base)


def random_rotation(rng) -> np.ndarray:
    # QR of a random matrix gives a uniform-ish orthonormal basis.
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


class TestProjection:
    def test_optical_axis_maps_to_principal_point(self):
        assert project_point((0.0, 0.0, 1.0), make_camera()) == (320, 240)

    def test_behind_camera_is_out_of_view(self):
        assert project_point((0.0, 0.0, -1.0), make_camera()) is None

    def test_pinhole_oracle(self):
        # u = fx * x / z + cx computed by hand
        assert project_point((0.1, 0.0, 1.0), make_camera()) == (370, 240)

    def test_outside_image_is_out_of_view(self):
        assert project_point((10.0, 0.0, 1.0), make_camera()) is None

    def test_distortion_matches_hand_computation(self):
        cam = make_camera(distortion=(0.1, 0.0, 0.0, 0.0, 0.0))
        x, z = 0.2, 1.0
        r2 = (x / z) ** 2
        u = 500.0 * (x / z) * (1 + 0.1 * r2) + 320.0
        assert project_point((x, 0.0, z), cam) == (round(u), 240)

    def test_deterministic(self):
        cam = make_camera(distortion=(0.01, -0.02, 0.001, 0.002, 0.0005))
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(100, 3)) + [0, 0, 3.0]
        a_pix, a_in = project_points(pts, cam)
        b_pix, b_in = project_points(pts, cam)
        assert np.array_equal(a_pix, b_pix) and np.array_equal(a_in, b_in)

    def test_vectorized_matches_scalar(self):
        cam = make_camera(distortion=(0.01, -0.02, 0.001, 0.002, 0.0005))
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(50, 3)) + [0, 0, 2.0]
        pixels, in_view = project_points(pts, cam)
        for i in range(len(pts)):
            single = project_point(pts[i], cam)
            if in_view[i]:
                assert single == (pixels[i, 0], pixels[i, 1])
            else:
                assert single is None


class TestRigidTransform:
    def test_identity_and_translation(self):
        cloud = RingedPointCloud.from_points(0.0, [RingedPoint(0, 0, 0, 0)])
        same = transform_cloud(cloud, RigidTransform.identity())
        assert np.allclose(same.xyz, cloud.xyz)
        moved = transform_cloud(cloud, RigidTransform(np.eye(3), [1.0, 0.0, 0.0]))
        assert np.allclose(moved.xyz, [[1.0, 0.0, 0.0]])

    def test_preserves_ring_and_ndvi(self):
        cloud = RingedPointCloud.from_points(
            0.0, [RingedPoint(1, 2, 3, 7, 0.5), RingedPoint(4, 5, 6, 2, None)])
        out = transform_cloud(cloud, RigidTransform.from_yaw(1.0, (0.5, -1.0, 2.0)))
        assert np.array_equal(out.ring_id, cloud.ring_id)
        assert np.allclose(out.ndvi, cloud.ndvi, equal_nan=True)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_round_trip_property(self, seed):
        rng = np.random.default_rng(seed)
        transform = RigidTransform(random_rotation(rng), rng.normal(size=3))
        cloud = RingedPointCloud(0.0, rng.normal(size=(30, 3)),
                                 np.zeros(30, dtype=np.int32), np.full(30, np.nan))
        back = transform_cloud(transform_cloud(cloud, transform),
                               transform.inverse())
        assert np.allclose(back.xyz, cloud.xyz, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_composition_associative(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (RigidTransform(random_rotation(rng), rng.normal(size=3))
                   for _ in range(3))
        left = (a @ b) @ c
        right = a @ (b @ c)
        assert np.allclose(left.rotation, right.rotation, atol=1e-9)
        assert np.allclose(left.translation, right.translation, atol=1e-9)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RigidTransform(np.eye(3) * 2.0, np.zeros(3))

    def test_rejects_reflection(self):
        reflection = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RigidTransform(reflection, np.zeros(3))


class TestTypes:
    def test_camera_validation(self):
        with pytest.raises(ValueError):
            make_camera(fx=-1.0)
        with pytest.raises(ValueError):
            make_camera(cx=999.0)

    def test_pose_heading_normalized(self):
        pose = RobotPose(timestamp=0.0, x=0.0, y=0.0, theta=3 * math.pi)
        assert -math.pi < pose.theta <= math.pi
        assert math.isclose(pose.theta, math.pi)

    def test_normalize_angle_half_open(self):
        assert normalize_angle(-math.pi) == math.pi
        assert math.isclose(normalize_angle(math.pi / 3), math.pi / 3)

    def test_cloud_rejects_out_of_range_ndvi(self):
        with pytest.raises(ValueError):
            RingedPointCloud(0.0, np.zeros((1, 3)), np.zeros(1, dtype=np.int32),
                             np.array([1.5]))

    def test_cloud_point_accessor(self):
        cloud = RingedPointCloud.from_points(
            1.0, [RingedPoint(1.0, 2.0, 3.0, 4, 0.25)])
        p = cloud.point(0)
        assert p == RingedPoint(1.0, 2.0, 3.0, 4, 0.25)
        cloud2 = RingedPointCloud.from_points(1.0, [RingedPoint(0, 0, 0, 0, None)])
        assert cloud2.point(0).ndvi is None
