"""Occupancy-submap LiDAR SLAM back-end on synthetic scenes."""

import json as _json

from ._occslam import (
    ConfigError,
    OccupancySubmap,
    Pose,
    Rotation,
    SensorModelParams,
    StageError,
    ate,
    compare,
    hilti_point_score,
    hilti_score,
    inverse_sensor_model,
    load_config,
    map_distance_and_sigma,
    occupancy_residual,
    raycast,
)
from ._occslam import run as _run

__all__ = [
    "ConfigError",
    "OccupancySubmap",
    "Pose",
    "Rotation",
    "SensorModelParams",
    "StageError",
    "ate",
    "compare",
    "hilti_point_score",
    "hilti_score",
    "inverse_sensor_model",
    "load_config",
    "map_distance_and_sigma",
    "occupancy_residual",
    "raycast",
    "run",
]


def run(config, overrides=None, output=""):
    """Runs the pipeline; metrics and timings come back parsed."""
    result = _run(config, {k: str(v) for k, v in (overrides or {}).items()}, output)
    result["metrics"] = _json.loads(result["metrics"])
    result["timings"] = _json.loads(result["timings"])
    return result
