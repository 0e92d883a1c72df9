"""NDVI computation, vegetation masking, and LiDAR point colorization.

The RGN camera supplies red/green/near-infrared reflectance; NDVI is the
normalized difference (nir - red) / (nir + red). A binary threshold on the
NDVI raster segments vegetation, and LiDAR points are projected into the
frame to pick up the NDVI value of the pixel they land on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CameraModel, RigidTransform, RingedPointCloud, project_points
from .errors import InvalidThresholdError

#: Default vegetation band: ndvi in (NDVI_MASK_LO, NDVI_MASK_HI].
NDVI_MASK_LO = -0.3
NDVI_MASK_HI = 1.0


@dataclass(frozen=True)
class RgnFrame:
    """Single RGN camera frame with channels normalized to [0, 1]."""

    timestamp: float
    red: np.ndarray
    green: np.ndarray
    nir: np.ndarray

    def __post_init__(self) -> None:
        red = np.asarray(self.red, dtype=np.float64)
        green = np.asarray(self.green, dtype=np.float64)
        nir = np.asarray(self.nir, dtype=np.float64)
        if red.shape != green.shape or red.shape != nir.shape or red.ndim != 2:
            raise ValueError("channels must be 2-D arrays of identical shape")
        for name, ch in (("red", red), ("green", green), ("nir", nir)):
            if ch.size and (ch.min() < -1e-12 or ch.max() > 1.0 + 1e-12):
                raise ValueError(f"{name} channel values must lie in [0, 1]")
        object.__setattr__(self, "red", red)
        object.__setattr__(self, "green", green)
        object.__setattr__(self, "nir", nir)

    @property
    def height(self) -> int:
        return self.red.shape[0]

    @property
    def width(self) -> int:
        return self.red.shape[1]


@dataclass(frozen=True)
class NdviFrame:
    """NDVI raster plus its binary vegetation mask.

    ``ndvi`` is NaN where the denominator nir + red is zero; such pixels are
    never part of the mask. ``lo``/``hi`` record the thresholds the mask was
    built with (mask true iff lo < ndvi <= hi).
    """

    ndvi: np.ndarray
    mask: np.ndarray
    lo: float = NDVI_MASK_LO
    hi: float = NDVI_MASK_HI

    def __post_init__(self) -> None:
        ndvi = np.asarray(self.ndvi, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if ndvi.shape != mask.shape or ndvi.ndim != 2:
            raise ValueError("ndvi and mask must be 2-D arrays of identical shape")
        object.__setattr__(self, "ndvi", ndvi)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.ndvi.shape[0]

    @property
    def width(self) -> int:
        return self.ndvi.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.ndvi)


def compute_ndvi(frame: RgnFrame) -> NdviFrame:
    """Compute the NDVI raster (nir - red) / (nir + red) for a frame.

    Pixels whose denominator is zero become NaN and are excluded from any
    mask built later. The returned frame carries an all-false mask; apply
    :func:`threshold_mask` to segment vegetation.
    """
    denom = frame.nir + frame.red
    with np.errstate(divide="ignore", invalid="ignore"):
        ndvi = np.where(denom > 0.0, (frame.nir - frame.red) / np.where(denom > 0, denom, 1.0),
                        np.nan)
    return NdviFrame(ndvi=ndvi, mask=np.zeros_like(ndvi, dtype=bool))


def threshold_mask(frame: NdviFrame, lo: float = NDVI_MASK_LO,
                   hi: float = NDVI_MASK_HI) -> NdviFrame:
    """Return a copy of the frame with mask true exactly where lo < ndvi <= hi.

    Raises:
        InvalidThresholdError: If lo >= hi.
    """
    if lo >= hi:
        raise InvalidThresholdError(f"empty threshold interval ({lo}, {hi}]")
    with np.errstate(invalid="ignore"):
        mask = (frame.ndvi > lo) & (frame.ndvi <= hi) & np.isfinite(frame.ndvi)
    return NdviFrame(ndvi=frame.ndvi, mask=mask, lo=lo, hi=hi)


def colorize_cloud(cloud: RingedPointCloud, ndvi: NdviFrame, cam: CameraModel,
                   lidar_to_cam: RigidTransform) -> RingedPointCloud:
    """Attach NDVI values to LiDAR points by projecting them into the frame.

    Each point is mapped to the camera frame and projected. Points landing
    on a mask-true pixel take that pixel's NDVI value; points landing on a
    mask-false pixel are dropped as non-vegetation; points outside the image
    (or behind the camera) are kept with NDVI absent. The output stays in
    the input cloud's frame.
    """
    if ndvi.height != cam.height or ndvi.width != cam.width:
        raise ValueError("NDVI frame dimensions must match the camera model")
    if len(cloud) == 0:
        return cloud
    cam_pts = lidar_to_cam.apply(cloud.xyz)
    pixels, in_view = project_points(cam_pts, cam)

    ndvi_out = np.full(len(cloud), np.nan)
    keep = np.ones(len(cloud), dtype=bool)
    if in_view.any():
        u = pixels[in_view, 0]
        v = pixels[in_view, 1]
        vegetation = ndvi.mask[v, u]
        values = ndvi.ndvi[v, u]
        idx = np.flatnonzero(in_view)
        keep[idx[~vegetation]] = False
        ndvi_out[idx[vegetation]] = values[vegetation]

    return RingedPointCloud(cloud.timestamp, cloud.xyz[keep], cloud.ring_id[keep],
                            ndvi_out[keep], cloud.frame_id)
