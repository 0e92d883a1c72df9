"""Preprocessing walkthrough: crop -> RANSAC ground removal -> clusters.

Shows how one raw sweep of the default 2x3 orchard shrinks stage by stage,
and what the resulting tree candidate clusters look like.

    python demos/02_ground_removal_and_clustering.py
"""

from treescan import (ClusterParams, NoiseSpec, OrchardSpec, RobotPose,
                      crop_cloud, downsample, euclidean_cluster, remove_ground,
                      render_scan)
from treescan.traits import LidarVerticalModel

orchard = OrchardSpec()
pose = RobotPose(timestamp=0.0, x=6.0, y=0.0, theta=0.0)
params = ClusterParams()

cloud = render_scan(orchard, pose, LidarVerticalModel(), NoiseSpec(), seed=1)
print(f"raw sweep:        {len(cloud):6d} points")

cloud = crop_cloud(cloud, params.crop_range)
print(f"after 20 m crop:  {len(cloud):6d} points")

cloud = remove_ground(cloud, params, seed=1)
print(f"after RANSAC:     {len(cloud):6d} points (ground plane removed)")

cloud = downsample(cloud, params.voxel_leaf)
print(f"after voxel grid: {len(cloud):6d} points at {params.voxel_leaf} m leaf")

clusters = euclidean_cluster(cloud, params)
print(f"\n{len(clusters)} tree candidates "
      f"(tolerance {params.cluster_tolerance} m, "
      f">= {params.min_cluster_points} points):")
for c in clusters:
    cx, cy, cz = c.centroid()
    print(f"  cluster {c.cluster_id}: {len(c):4d} points, "
          f"centroid ({cx:6.2f}, {cy:6.2f}, {cz:5.2f}) m")
