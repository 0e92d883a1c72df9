"""Tests for NDVI computation, masking, and point colorization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treescan.core import CameraModel, RigidTransform, RingedPoint, RingedPointCloud
from treescan.errors import InvalidThresholdError
from treescan.fusion import (NdviFrame, RgnFrame, colorize_cloud, compute_ndvi,
                             threshold_mask)


def frame_from(nir, red):
    nir = np.asarray(nir, dtype=np.float64)
    red = np.asarray(red, dtype=np.float64)
    return RgnFrame(timestamp=0.0, red=red, green=np.zeros_like(red), nir=nir)


class TestComputeNdvi:
    @pytest.mark.parametrize("nir,red,expected", [
        (0.6, 0.2, 0.5),
        (0.4, 0.4, 0.0),
        (0.5, 0.0, 1.0),
    ])
    def test_formula_cases(self, nir, red, expected):
        out = compute_ndvi(frame_from([[nir]], [[red]]))
        assert out.ndvi[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_zero_denominator_invalid(self):
        out = compute_ndvi(frame_from([[0.0]], [[0.0]]))
        assert np.isnan(out.ndvi[0, 0])
        assert not out.valid[0, 0]
        masked = threshold_mask(out)
        assert not masked.mask[0, 0]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=100_000))
    def test_output_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        nir = rng.uniform(0.0, 1.0, size=(8, 8))
        red = rng.uniform(0.0, 1.0, size=(8, 8))
        out = compute_ndvi(frame_from(nir, red))
        finite = out.ndvi[np.isfinite(out.ndvi)]
        assert finite.min() >= -1.0 - 1e-12
        assert finite.max() <= 1.0 + 1e-12

    def test_matches_closed_form_elementwise(self):
        rng = np.random.default_rng(11)
        nir = rng.uniform(0.0, 1.0, size=(32, 32))
        red = rng.uniform(0.0, 1.0, size=(32, 32))
        out = compute_ndvi(frame_from(nir, red))
        expected = (nir - red) / (nir + red)
        assert np.allclose(out.ndvi, expected, atol=1e-12)


class TestThresholdMask:
    def test_default_band_includes_half(self):
        masked = threshold_mask(compute_ndvi(frame_from([[0.6]], [[0.2]])))
        assert masked.mask[0, 0]  # ndvi 0.5 inside (-0.3, 1.0]

    def test_lower_bound_exclusive(self):
        # nir/red chosen so ndvi is exactly -0.3
        masked = threshold_mask(compute_ndvi(frame_from([[0.35]], [[0.65]])))
        assert masked.ndvi[0, 0] == pytest.approx(-0.3)
        assert not masked.mask[0, 0]

    def test_upper_bound_inclusive(self):
        masked = threshold_mask(compute_ndvi(frame_from([[0.5]], [[0.0]])))
        assert masked.ndvi[0, 0] == 1.0
        assert masked.mask[0, 0]

    def test_invalid_interval_raises(self):
        frame = compute_ndvi(frame_from([[0.5]], [[0.1]]))
        with pytest.raises(InvalidThresholdError):
            threshold_mask(frame, lo=0.5, hi=0.5)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=100_000))
    def test_widening_is_monotone(self, seed):
        rng = np.random.default_rng(seed)
        frame = compute_ndvi(frame_from(rng.uniform(0, 1, (6, 6)),
                                        rng.uniform(0, 1, (6, 6))))
        lo = rng.uniform(-0.9, 0.5)
        hi = rng.uniform(lo + 0.05, 1.0)
        narrow = threshold_mask(frame, lo, hi)
        wide = threshold_mask(frame, lo - 0.1, min(1.0, hi + 0.1))
        assert not np.any(narrow.mask & ~wide.mask)


def _colorize_fixture():
    """Camera at origin looking +z; three points: veg pixel, bare pixel, behind."""
    cam = CameraModel(fx=10.0, fy=10.0, cx=2.0, cy=2.0, width=5, height=5)
    ndvi = np.zeros((5, 5))
    mask = np.zeros((5, 5), dtype=bool)
    ndvi[2, 2] = 0.62
    mask[2, 2] = True           # center pixel is vegetation
    ndvi[2, 4] = -0.1           # in view but not vegetation
    frame = NdviFrame(ndvi=ndvi, mask=mask)
    cloud = RingedPointCloud.from_points(0.0, [
        RingedPoint(0.0, 0.0, 1.0, 0),    # projects to (2, 2): vegetation
        RingedPoint(0.2, 0.0, 1.0, 1),    # projects to (4, 2): masked false
        RingedPoint(0.0, 0.0, -1.0, 2),   # behind the camera
    ])
    return cloud, frame, cam


class TestColorizeCloud:
    def test_rules(self):
        cloud, frame, cam = _colorize_fixture()
        out = colorize_cloud(cloud, frame, cam, RigidTransform.identity())
        assert len(out) == 2  # masked-false point dropped
        assert out.point(0).ndvi == pytest.approx(0.62)
        assert out.point(0).ring_id == 0
        assert out.point(1).ring_id == 2
        assert out.point(1).ndvi is None  # behind camera: kept, no NDVI

    def test_never_increases_count(self):
        rng = np.random.default_rng(5)
        cam = CameraModel(fx=50.0, fy=50.0, cx=32.0, cy=32.0, width=64, height=64)
        ndvi = rng.uniform(-1, 1, size=(64, 64))
        frame = NdviFrame(ndvi=ndvi, mask=ndvi > 0.0)
        cloud = RingedPointCloud(0.0, rng.normal(size=(200, 3)),
                                 np.zeros(200, dtype=np.int32), np.full(200, np.nan))
        out = colorize_cloud(cloud, frame, cam, RigidTransform.identity())
        assert len(out) <= len(cloud)

    def test_retained_points_carry_pixel_value(self):
        rng = np.random.default_rng(6)
        cam = CameraModel(fx=50.0, fy=50.0, cx=32.0, cy=32.0, width=64, height=64)
        ndvi = rng.uniform(0.01, 1.0, size=(64, 64))
        frame = NdviFrame(ndvi=ndvi, mask=np.ones((64, 64), dtype=bool))
        pts = rng.uniform(-0.3, 0.3, size=(100, 3))
        pts[:, 2] = 1.0
        cloud = RingedPointCloud(0.0, pts, np.zeros(100, dtype=np.int32),
                                 np.full(100, np.nan))
        out = colorize_cloud(cloud, frame, cam, RigidTransform.identity())
        from treescan.core import project_points
        pixels, in_view = project_points(out.xyz, cam)
        for i in range(len(out)):
            assert in_view[i]
            assert out.ndvi[i] == ndvi[pixels[i, 1], pixels[i, 0]]

    def test_frame_must_match_camera(self):
        cloud, frame, _ = _colorize_fixture()
        wrong_cam = CameraModel(fx=10.0, fy=10.0, cx=2.0, cy=2.0, width=8, height=8)
        with pytest.raises(ValueError):
            colorize_cloud(cloud, frame, wrong_cam, RigidTransform.identity())
