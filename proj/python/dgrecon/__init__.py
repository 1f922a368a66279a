"""Depth-guided TSDF reconstruction."""

from ._dgrecon import (
    Camera,
    GridSpec,
    Intrinsics,
    Model,
    Pose,
    Scene,
    TsdfVolume,
    fuse_depths,
    load_model,
    load_scene,
    look_at,
    make_scene,
    marching_cubes,
    metrics_2d,
    metrics_3d,
    reconstruct,
    render_depth,
    train,
)

__all__ = [
    "Camera",
    "GridSpec",
    "Intrinsics",
    "Model",
    "Pose",
    "Scene",
    "TsdfVolume",
    "fuse_depths",
    "load_model",
    "load_scene",
    "look_at",
    "make_scene",
    "marching_cubes",
    "metrics_2d",
    "metrics_3d",
    "reconstruct",
    "render_depth",
    "train",
]
