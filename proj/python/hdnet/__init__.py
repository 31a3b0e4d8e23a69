"""Hierarchically decoupled crowd counting: density decoupling, multi-expert
density estimation, and scale-adaptive fusion, backed by a C++ core."""

from ._core import (
    ConfigError,
    FileError,
    Model,
    ValidationError,
    build_level_masks,
    evaluate_counts,
    fuse_density,
    pool_to_model_resolution,
    quantile_thresholds,
    rasterize_density,
    soft_masks,
    synthetic_scene,
)

__all__ = [
    "ConfigError",
    "FileError",
    "Model",
    "ValidationError",
    "build_level_masks",
    "evaluate_counts",
    "fuse_density",
    "pool_to_model_resolution",
    "quantile_thresholds",
    "rasterize_density",
    "soft_masks",
    "synthetic_scene",
]
