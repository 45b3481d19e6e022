"""Scan-matching LiDAR odometry: feature extraction and motion estimation."""

from .features import Feature, FeatureSet, Scan, extract_features, ring_smoothness, smoothness
from .odometry import (
    EdgeCorrespondence,
    LoamOdometry,
    OdomState,
    PlanarCorrespondence,
    accumulate,
    estimate_motion,
    find_correspondences,
    point_to_line_distance,
    point_to_plane_distance,
    project_sweep,
)

__all__ = [
    "Feature",
    "FeatureSet",
    "Scan",
    "extract_features",
    "ring_smoothness",
    "smoothness",
    "EdgeCorrespondence",
    "PlanarCorrespondence",
    "LoamOdometry",
    "OdomState",
    "accumulate",
    "estimate_motion",
    "find_correspondences",
    "point_to_line_distance",
    "point_to_plane_distance",
    "project_sweep",
]
