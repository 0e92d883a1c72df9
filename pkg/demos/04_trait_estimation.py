"""Trait estimation walkthrough: height from ring sweeps, width from slices.

Drives past a single tree of known size and prints how the running height
and width estimates tighten as the viewing geometry improves.

    python demos/04_trait_estimation.py
"""

from treescan import (ClusterMeasurement, ClusterParams, LandmarkBank,
                      NoiseSpec, OrchardSpec, PoseDelta, TrajectorySpec,
                      associate_scan, crop_cloud, downsample, estimate_height,
                      estimate_width, euclidean_cluster, kalman_update,
                      remove_ground)
from treescan.core import RigidTransform
from treescan.sim import SurveySpec, simulate_survey
from treescan.traits import LidarVerticalModel

import numpy as np

orchard = OrchardSpec(rows=1, cols=1, origin_x=12.0, origin_y=3.5)
tree = orchard.trees[0]
spec = SurveySpec(orchard=orchard,
                  trajectory=TrajectorySpec(goal_distance=20.0),
                  noise=NoiseSpec.zero())
params = ClusterParams()
lidar = LidarVerticalModel()
lidar_to_base = RigidTransform(np.eye(3), np.array([0, 0, lidar.sensor_height]))

print(f"ground truth: width {tree.width:.2f} m, height {tree.total_height:.2f} m\n")
print(f"{'t (s)':>6} {'range (m)':>9} {'top ring':>8} {'height est':>10} "
      f"{'width est':>9}")

bank = LandmarkBank()
prev = None
for sample in simulate_survey(spec, seed=0):
    cloud = downsample(remove_ground(crop_cloud(sample.cloud, params.crop_range),
                                     params, seed=sample.index), params.voxel_leaf)
    clusters = euclidean_cluster(cloud, params)
    delta = (PoseDelta() if prev is None else
             PoseDelta(v_x=prev.v_x, omega=prev.omega, theta=sample.pose.theta,
                       dt=sample.pose.timestamp - prev.timestamp))
    prev = sample.pose
    ms = [ClusterMeasurement.from_cluster(c, lidar_to_base) for c in clusters]
    result = associate_scan(ms, bank, delta, timestamp=sample.pose.timestamp)
    for lid, k in result.pairs:
        lm = kalman_update(bank.get(lid), ms[k], sample.pose.timestamp)
        lm = estimate_height(clusters[k], lm, lidar)
        lm = estimate_width(clusters[k], lm)
        bank.put(lm)
    for lid, k in zip(result.new_landmarks, result.new_landmark_sources):
        lm = estimate_height(clusters[k], bank.get(lid), lidar)
        bank.put(estimate_width(clusters[k], lm))

    if sample.index % 20 == 0 and len(bank):
        lm = next(iter(bank))
        tree_range = ((orchard.origin_x - sample.pose.x) ** 2
                      + (orchard.origin_y - sample.pose.y) ** 2) ** 0.5
        print(f"{sample.pose.timestamp:6.1f} {tree_range:9.2f} "
              f"{lm.top_ring_seen:8d} {lm.height_est:10.2f} {lm.width_est:9.2f}")

lm = next(iter(bank))
print(f"\nfinal: height {lm.height_est:.2f} m "
      f"(err {100 * abs(lm.height_est - tree.total_height) / tree.total_height:.1f}%), "
      f"width {lm.width_est:.2f} m "
      f"(err {100 * abs(lm.width_est - tree.width) / tree.width:.1f}%)")
