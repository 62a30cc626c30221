"""Depth sensing around arm occlusions with a tiltable sensor and a fixed mirror."""

from .geometry import (
    Frame,
    HomogeneousTransform,
    Plane,
    PointCloud,
    SensorRig,
    householder_from_plane,
    plane_from_transform,
    tilt_transform,
)
from .scene import ArmModel, Box, MirrorPatch, SceneModel, randomized_scene
from .sensor import CameraIntrinsics, NoiseModel, render

__all__ = [
    "ArmModel", "Box", "CameraIntrinsics", "Frame", "HomogeneousTransform", "MirrorPatch",
    "NoiseModel", "Plane", "PointCloud", "SceneModel", "SensorRig", "householder_from_plane",
    "plane_from_transform", "randomized_scene", "render", "tilt_transform",
]
