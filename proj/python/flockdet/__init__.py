"""Pedestrian flock detection: pair features, sequence classifiers, flock aggregation."""

from ._flockdet import (
    FEATURE_NAMES,
    CheckpointError,
    ConfigMismatch,
    FlockError,
    Model,
    aggregate_flocks,
    dtw_distance,
    fast_dtw_distance,
    featurize_pair,
    generate_synthetic,
    normalize_angle,
)

__all__ = [
    "FEATURE_NAMES",
    "CheckpointError",
    "ConfigMismatch",
    "FlockError",
    "Model",
    "aggregate_flocks",
    "dtw_distance",
    "fast_dtw_distance",
    "featurize_pair",
    "generate_synthetic",
    "normalize_angle",
]
