"""Sensing-strategy comparison: direct only, mirror only, direct + mirror, two sensors."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .bev import match_detections
from .geometry import Frame, PointCloud, householder_from_plane
from .pipeline import (
    REFLECT_STREAM,
    SECOND_SENSOR_STREAM,
    PipelineConfig,
    coverage,
    detect_objects,
    fuse,
    optimal_tilt_angle,
    run_pipeline,
    to_world,
)
from .scene import SceneModel
from .sensor import BOX, Capture, NoiseModel, derive_seed, render, render_mirror_image_sensor

STRATEGIES = ("direct", "mirror", "direct+mirror", "two-sensor")


@dataclass(frozen=True)
class RunReport:
    scene_id: str
    strategy: str
    theta_deg: float
    n_direct: int
    n_mirror: int
    coverage: float
    tp50: int
    fp50: int
    fn50: int
    tp75: int
    fp75: int
    fn75: int
    y_residual_deg: float = 0.0
    wall_time_ms: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")

    CSV_FIELDS = (
        "scene_id", "strategy", "theta_deg", "n_direct", "n_mirror", "coverage",
        "tp50", "fp50", "fn50", "tp75", "fp75", "fn75", "y_residual_deg",
    )

    def csv_row(self, timing: bool = False) -> list[str]:
        row = [
            self.scene_id, self.strategy, f"{self.theta_deg:.3f}", str(self.n_direct), str(self.n_mirror),
            f"{self.coverage:.4f}", str(self.tp50), str(self.fp50), str(self.fn50),
            str(self.tp75), str(self.fp75), str(self.fn75), f"{self.y_residual_deg:.3f}",
        ]
        if timing:
            row.append(f"{self.wall_time_ms:.1f}")
        return row


def reference_points(scene: SceneModel, captures: Iterable[Capture]) -> PointCloud:
    """Noiseless top-face points of the target box(es) seen by the given captures."""
    targets = [scene.arm_target] if scene.arm_target is not None else range(len(scene.boxes))
    chunks = []
    for cap in captures:
        for i in targets:
            top = scene.boxes[i].top
            sel = (cap.labels == BOX + i) & (np.abs(cap.surface_points[:, 2] - top) < 1e-6)
            chunks.append(cap.surface_points[sel])
    pts = np.concatenate(chunks) if chunks else np.empty((0, 3))
    return PointCloud(pts, Frame.WORLD)


def fallback_target(scene: SceneModel) -> tuple[float, float, float]:
    if scene.arm_target is not None:
        c = scene.boxes[scene.arm_target].center
    elif scene.boxes:
        c = np.mean([b.center for b in scene.boxes], axis=0)
    else:
        c = (0.0, 0.0, 0.0)
    return (float(c[0]), float(c[1]), scene.expected_object_height / 2)


@dataclass(frozen=True)
class SceneEvaluation:
    scene_id: str
    theta: float
    reports: list[RunReport]
    y_residual: float

    def by_strategy(self) -> dict[str, RunReport]:
        return {r.strategy: r for r in self.reports}


def evaluate_scene(
    scene: SceneModel,
    noise: Optional[NoiseModel] = None,
    config: Optional[PipelineConfig] = None,
    strategies: Sequence[str] = STRATEGIES,
) -> SceneEvaluation:
    unknown = set(strategies) - set(STRATEGIES)
    if unknown:
        raise ValueError(f"unknown strategies: {sorted(unknown)}")
    noise = NoiseModel() if noise is None else noise
    config = PipelineConfig() if config is None else config
    rig = scene.sensor
    h_m = householder_from_plane(scene.believed_mirror_plane())

    t0 = time.perf_counter()
    result = run_pipeline(scene, noise, config)
    pipeline_ms = (time.perf_counter() - t0) * 1e3
    theta, reflect = result.theta, result.reflect
    if reflect is None:
        theta = optimal_tilt_angle(rig, fallback_target(scene), h_m)
        reflect = render(scene, theta, noise.with_seed(derive_seed(noise.seed, REFLECT_STREAM)), config.intrinsics)
    second = render_mirror_image_sensor(
        scene, theta, noise.with_seed(derive_seed(noise.seed, SECOND_SENSOR_STREAM)), config.intrinsics
    )
    reference = reference_points(scene, [result.direct, second])
    truth = [b.footprint() for b in scene.boxes]

    direct_world = to_world(result.direct, rig, h_m)
    clouds = {
        "direct": lambda: direct_world,
        "mirror": lambda: fuse(None, reflect, rig, h_m).cloud,
        "direct+mirror": lambda: fuse(result.direct, reflect, rig, h_m).cloud,
        "two-sensor": lambda: PointCloud.concatenate([direct_world, second.cloud]),
    }
    reports = []
    for name in strategies:
        t1 = time.perf_counter()
        cloud = clouds[name]()
        dets = detect_objects(cloud, scene, config)
        tp50, fp50, fn50 = match_detections(dets, truth, 0.5)
        tp75, fp75, fn75 = match_detections(dets, truth, 0.75)
        cov = coverage(cloud, reference, config.coverage_radius) if len(reference) else 1.0
        n_mirror = int(cloud.via_mirror.sum())
        reports.append(
            RunReport(
                scene.scene_id, name, math.degrees(theta), len(cloud) - n_mirror, n_mirror, cov,
                tp50, fp50, fn50, tp75, fp75, fn75,
                y_residual_deg=math.degrees(result.y_residual),
                wall_time_ms=pipeline_ms + (time.perf_counter() - t1) * 1e3,
            )
        )
    return SceneEvaluation(scene.scene_id, theta, reports, result.y_residual)


def f1_score(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 1.0


def summarize(evaluations: Sequence[SceneEvaluation]) -> dict[str, dict[str, float]]:
    """Mean coverage and pooled F1 at IoU 0.5 / 0.75 per strategy."""
    out: dict[str, dict[str, float]] = {}
    for name in STRATEGIES:
        rows = [e.by_strategy()[name] for e in evaluations if name in e.by_strategy()]
        if not rows:
            continue
        out[name] = {
            "coverage": float(np.mean([r.coverage for r in rows])),
            "f1_50": f1_score(sum(r.tp50 for r in rows), sum(r.fp50 for r in rows), sum(r.fn50 for r in rows)),
            "f1_75": f1_score(sum(r.tp75 for r in rows), sum(r.fp75 for r in rows), sum(r.fn75 for r in rows)),
        }
    return out
