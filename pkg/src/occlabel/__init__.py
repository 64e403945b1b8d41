"""Semantic-occupancy auto-labeling and 4D-radar/camera input preparation."""

from .errors import ConfigError, EvaluationError, FormatError, IngestionError, OccLabelError
from .geometry import CameraIntrinsics, GridSpec, Pose, Ray

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "ConfigError",
    "EvaluationError",
    "FormatError",
    "GridSpec",
    "IngestionError",
    "OccLabelError",
    "Pose",
    "Ray",
]
