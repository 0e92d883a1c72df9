"""NDVI fusion walkthrough: RGN frame -> vegetation mask -> colored cloud.

Renders one camera frame and one LiDAR sweep of a small synthetic orchard,
computes the NDVI raster, thresholds it into a vegetation mask, and attaches
per-pixel NDVI values to the LiDAR points by projection. Run it directly:

    python demos/01_ndvi_fusion.py
"""

import numpy as np

from treescan import (NoiseSpec, OrchardSpec, RobotPose, colorize_cloud,
                      compute_ndvi, render_rgn, render_scan, threshold_mask)
from treescan.sim import default_camera, default_lidar_to_cam
from treescan.traits import LidarVerticalModel

orchard = OrchardSpec(rows=1, cols=2, origin_x=6.0, origin_y=-2.0)
pose = RobotPose(timestamp=0.0, x=0.0, y=0.0, theta=0.0)
lidar = LidarVerticalModel()
camera = default_camera()
noise = NoiseSpec.zero()

frame = render_rgn(orchard, pose, camera, noise, seed=0,
                   sensor_height=lidar.sensor_height)
print(f"rendered RGN frame: {frame.width}x{frame.height}, "
      f"nir range [{frame.nir.min():.2f}, {frame.nir.max():.2f}]")

ndvi = compute_ndvi(frame)
masked = threshold_mask(ndvi)  # vegetation band (-0.3, 1.0]
print(f"NDVI range [{np.nanmin(ndvi.ndvi):.2f}, {np.nanmax(ndvi.ndvi):.2f}], "
      f"vegetation mask covers {100 * masked.mask.mean():.1f}% of pixels")

cloud = render_scan(orchard, pose, lidar, noise, seed=0)
fused = colorize_cloud(cloud, masked, camera, default_lidar_to_cam())
with_ndvi = np.isfinite(fused.ndvi)
print(f"scan: {len(cloud)} points -> {len(fused)} after fusion, "
      f"{with_ndvi.sum()} carry an NDVI value")

# ground pixels sit inside the vegetation band too (NDVI ~ 0); the RANSAC
# stage removes those points later, so compare crown-level points only
crown_level = with_ndvi & (fused.xyz[:, 2] > 0.3 - lidar.sensor_height + 0.5)
print(f"mean NDVI at crown level: {fused.ndvi[crown_level].mean():.3f} "
      f"(leaf NDVI of the nearest tree is {orchard.trees[0].leaf_ndvi_mean})")
