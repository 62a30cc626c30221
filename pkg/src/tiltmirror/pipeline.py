"""Adaptive sensing pipeline: direct capture, occlusion detection, tilt selection,
reflection capture, mirror-data realization and fusion, box detection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .bev import (
    BevGrid,
    DetectedBox,
    OcclusionRegion,
    bev_project,
    detect_boxes,
    detect_occlusions,
    fill_gaps,
)
from .geometry import (
    Frame,
    HomogeneousTransform,
    PointCloud,
    SensorRig,
    householder_from_plane,
    plane_from_transform,
)
from .scene import SceneModel
from .sensor import Capture, CameraIntrinsics, NoiseModel, derive_seed, render

DIRECT_STREAM = 1
REFLECT_STREAM = 2
SECOND_SENSOR_STREAM = 3


class UnreachableTargetError(ValueError):
    """The mirrored target is level with (or above) the sensor."""


class PipelineWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    cell_size: float = 0.01
    intrinsics: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics(320, 240))
    bounds: tuple[float, float, float, float] = (-1.0, -0.9, 1.15, 0.9)
    min_box_height: float = 0.03
    min_box_area: float = 0.01
    coverage_radius: float = 0.01


def optimal_tilt_angle(sensor: SensorRig, target, h_m: HomogeneousTransform) -> float:
    """Tilt that points the optical axis at the mirror image of ``target`` (X-Z plane)."""
    x_tv = h_m.inverse().transform_points(target)[0]
    dx = x_tv[0] - sensor.position[0]
    dz = sensor.position[2] - x_tv[2]
    if dz <= 1e-9:
        raise UnreachableTargetError(f"mirrored target {x_tv.round(4).tolist()} is not below the sensor")
    return math.atan2(dx, dz)


def aim_residual(sensor: SensorRig, target, h_m: HomogeneousTransform) -> float:
    """Out-of-plane (Y) angle between the tilted optical axis and the mirrored target; tilt cannot remove it."""
    x_tv = h_m.inverse().transform_points(target)[0]
    rel = x_tv - np.asarray(sensor.position)
    return math.atan2(rel[1], math.hypot(rel[0], rel[2]))


@dataclass(frozen=True)
class FusedCloud:
    cloud: PointCloud
    n_direct: int
    n_mirror: int

    def __post_init__(self):
        if self.cloud.frame != Frame.WORLD:
            raise ValueError("fused cloud must be in the World frame")


def to_world(capture: Capture, rig: SensorRig, h_m: HomogeneousTransform) -> PointCloud:
    """Map a capture to World and realize its via-mirror points with ``h_m``."""
    cloud = capture.cloud
    if cloud.frame == Frame.WORLD:
        pts = cloud.points.copy()
    elif cloud.frame == Frame.TILTED:
        pts = rig.world_from_tilted(capture.tilt_angle).transform_points(cloud.points)
    else:
        raise ValueError(f"capture cloud must be TiltedSensor or World, got {cloud.frame.value}")
    vm = cloud.via_mirror
    if vm.any():
        pts[vm] = h_m.transform_points(pts[vm])
    return PointCloud(pts, Frame.WORLD, vm)


def fuse(
    direct: Optional[Capture],
    reflect: Optional[Capture],
    rig: SensorRig,
    h_m: HomogeneousTransform,
) -> FusedCloud:
    """Concatenate direct and reflection captures in World, mirror points realized."""
    parts = [to_world(c, rig, h_m) for c in (direct, reflect) if c is not None]
    cloud = PointCloud.concatenate(parts) if parts else PointCloud(np.empty((0, 3)))
    if cloud.via_mirror.any():
        plane = plane_from_transform(h_m, tol=1e-6)
        side = np.sign(plane.signed_distance(rig.position)[0])
        behind = cloud.via_mirror & (side * plane.signed_distance(cloud.points) < 0)
        if behind.any():
            cloud = cloud.select(~behind)
    n_mirror = int(cloud.via_mirror.sum())
    return FusedCloud(cloud, len(cloud) - n_mirror, n_mirror)


def coverage(fused, reference: PointCloud, radius: float = 0.01) -> float:
    """Fraction of reference points with a fused point within ``radius``."""
    cloud = fused.cloud if isinstance(fused, FusedCloud) else fused
    if len(reference) == 0:
        raise ValueError("coverage is undefined for an empty reference cloud")
    if len(cloud) == 0:
        return 0.0
    dist, _ = cKDTree(cloud.points).query(reference.points, k=1, distance_upper_bound=radius)
    return float(np.mean(np.isfinite(dist)))


def object_grid(cloud: PointCloud, scene: SceneModel, config: PipelineConfig) -> BevGrid:
    """BEV of the cloud after removing everything above the height threshold (the arm)."""
    low = cloud.select(cloud.points[:, 2] <= scene.height_threshold)
    return fill_gaps(bev_project(low, config.cell_size, config.bounds))


def detect_objects(cloud: PointCloud, scene: SceneModel, config: PipelineConfig) -> list[DetectedBox]:
    grid = object_grid(cloud, scene, config)
    return detect_boxes(grid, config.min_box_height, scene.height_threshold, config.min_box_area)


def find_occlusions(cloud: PointCloud, scene: SceneModel, config: PipelineConfig) -> list[OcclusionRegion]:
    grid = fill_gaps(bev_project(cloud, config.cell_size, config.bounds))
    return detect_occlusions(grid, scene.height_threshold, scene.expected_robots)


@dataclass(frozen=True)
class PipelineResult:
    fused: FusedCloud
    detections: list[DetectedBox]
    theta: float
    occlusions: list[OcclusionRegion]
    direct: Capture
    reflect: Optional[Capture]
    target: Optional[tuple[float, float, float]]
    y_residual: float = 0.0


def run_pipeline(
    scene: SceneModel,
    noise: Optional[NoiseModel] = None,
    config: Optional[PipelineConfig] = None,
) -> PipelineResult:
    noise = NoiseModel() if noise is None else noise
    config = PipelineConfig() if config is None else config
    rig = scene.sensor
    h_m = householder_from_plane(scene.believed_mirror_plane())

    direct = render(scene, 0.0, noise.with_seed(derive_seed(noise.seed, DIRECT_STREAM)), config.intrinsics)
    direct_world = to_world(direct, rig, h_m)
    occlusions = find_occlusions(direct_world, scene, config)

    def direct_only(occ, target=None):
        fused = fuse(direct, None, rig, h_m)
        return PipelineResult(fused, detect_objects(fused.cloud, scene, config), 0.0, occ, direct, None, target)

    if not occlusions:
        return direct_only(occlusions)

    cx, cy = occlusions[0].centroid
    target = (cx, cy, scene.expected_object_height / 2)
    try:
        theta = optimal_tilt_angle(rig, target, h_m)
    except UnreachableTargetError as exc:
        warnings.warn(f"falling back to direct sensing only: {exc}", PipelineWarning, stacklevel=2)
        return direct_only(occlusions, target)

    reflect = render(scene, theta, noise.with_seed(derive_seed(noise.seed, REFLECT_STREAM)), config.intrinsics)
    fused = fuse(direct, reflect, rig, h_m)
    return PipelineResult(
        fused=fused,
        detections=detect_objects(fused.cloud, scene, config),
        theta=theta,
        occlusions=occlusions,
        direct=direct,
        reflect=reflect,
        target=target,
        y_residual=aim_residual(rig, target, h_m),
    )
