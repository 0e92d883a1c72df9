"""treescan: by-tree trait surveying from fused RGN camera + 3D LiDAR data.

The package detects trees in LiDAR scans colored by vegetation index,
tracks each tree as a Kalman-filter landmark matched through a Mahalanobis
probability + entropy gate, estimates per-tree width and height on the go,
and georeferences the results against a field registry. A deterministic
synthetic orchard simulator provides desk-scale validation data.
"""

from .association import (AssociationResult, ClusterMeasurement, LandmarkBank,
                          PoseDelta, TreeLandmark, associate_scan,
                          association_entropy, kalman_update, match_probability,
                          normalized_innovation, predict)
from .core import (CameraModel, RigidTransform, RingedPoint, RingedPointCloud,
                   RobotPose, project_point, project_points, transform_cloud)
from .fusion import NdviFrame, RgnFrame, colorize_cloud, compute_ndvi, threshold_mask
from .georef import (FieldMap, GeoTreeRecord, PoseInterpolator, UtmDatum,
                     match_and_update, nearest_record, to_global)
from .pipeline import PipelineConfig, RunReport, compute_mape, run_pipeline
from .preprocess import (ClusterParams, TreeCluster, crop_cloud, downsample,
                         euclidean_cluster, remove_ground)
from .sim import (NoiseSpec, OrchardSpec, SurveySpec, TrajectorySpec, TreeShape,
                  build_fieldmap, generate_trajectory, render_rgn, render_scan,
                  simulate_survey)
from .traits import LidarVerticalModel, estimate_height, estimate_width, sliced_width

__version__ = "0.1.0"

__all__ = [
    "AssociationResult", "CameraModel", "ClusterMeasurement", "ClusterParams",
    "FieldMap", "GeoTreeRecord", "LandmarkBank", "LidarVerticalModel",
    "NdviFrame", "NoiseSpec", "OrchardSpec", "PipelineConfig", "PoseDelta",
    "PoseInterpolator", "RgnFrame", "RigidTransform", "RingedPoint",
    "RingedPointCloud", "RobotPose", "RunReport", "SurveySpec",
    "TrajectorySpec", "TreeCluster", "TreeLandmark", "TreeShape", "UtmDatum",
    "associate_scan", "association_entropy", "build_fieldmap", "colorize_cloud",
    "compute_mape", "compute_ndvi", "crop_cloud", "downsample",
    "estimate_height", "estimate_width", "euclidean_cluster",
    "generate_trajectory", "kalman_update", "match_and_update",
    "match_probability", "nearest_record", "normalized_innovation", "predict",
    "project_point", "project_points", "remove_ground", "render_rgn",
    "render_scan", "run_pipeline", "simulate_survey", "sliced_width",
    "threshold_mask", "to_global", "transform_cloud",
]
