import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import sdf
from tiltmirror.bev import bev_project, detect_boxes, polygon_iou
from tiltmirror.geometry import Frame, HomogeneousTransform, Plane, PointCloud, SensorRig, householder_from_plane
from tiltmirror.pipeline import (
    FusedCloud,
    PipelineConfig,
    PipelineWarning,
    UnreachableTargetError,
    coverage,
    detect_objects,
    find_occlusions,
    fuse,
    optimal_tilt_angle,
    run_pipeline,
    to_world,
)
from tiltmirror.scene import ArmModel, Box, SceneModel, randomized_scene
from tiltmirror.sensor import CameraIntrinsics, Capture, NoiseModel, render

MIRROR_X = householder_from_plane(Plane(1, 0, 0, -1.2))
CONFIG = PipelineConfig(intrinsics=CameraIntrinsics(160, 120))


def test_tilt_angle_example():
    theta = optimal_tilt_angle(SensorRig(), (0.5, 0.0, 0.0), MIRROR_X)
    assert theta == pytest.approx(math.atan2(1.9, 2.1), abs=1e-12)
    assert math.degrees(theta) == pytest.approx(42.14, abs=0.005)


def test_tilt_angle_direct_mode():
    assert optimal_tilt_angle(SensorRig(), (0.0, 0.0, 0.0), HomogeneousTransform.identity()) == 0.0


def test_tilt_angle_unreachable():
    with pytest.raises(UnreachableTargetError):
        optimal_tilt_angle(SensorRig(), (0.5, 0.0, 2.1), MIRROR_X)


def _point_capture(points, via, theta=0.0):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    return Capture(
        cloud=PointCloud(pts, Frame.TILTED, np.asarray(via, dtype=bool)),
        depth_image=np.zeros((1, 1)),
        tilt_angle=theta,
        labels=np.zeros(n, int),
        pixel_index=np.arange(n),
        surface_points=pts,
        bounce_points=np.full((n, 3), np.nan),
    )


def test_fuse_realizes_virtual_point():
    rig = SensorRig()
    world_virtual = MIRROR_X.transform_points([0.5, 0.0, 0.1])[0]
    theta = 0.4
    local = rig.world_from_tilted(theta).inverse().transform_points(world_virtual)
    fused = fuse(None, _point_capture(local, [True], theta), rig, MIRROR_X)
    assert_allclose(fused.cloud.points, [[0.5, 0.0, 0.1]], atol=1e-9)
    assert (fused.n_direct, fused.n_mirror) == (0, 1)


def test_fuse_empty_reflect_equals_direct():
    scene = randomized_scene(1)
    cap = render(scene, 0.0, NoiseModel(seed=3), CONFIG.intrinsics)
    h = householder_from_plane(scene.mirror.plane)
    fused = fuse(cap, None, scene.sensor, h)
    assert_allclose(fused.cloud.points, to_world(cap, scene.sensor, h).points)


def test_fused_cloud_requires_world():
    with pytest.raises(ValueError):
        FusedCloud(PointCloud(np.zeros((1, 3)), Frame.SENSOR), 1, 0)


def test_to_world_rejects_sensor_frame():
    cap = _point_capture([0, 0, -1], [False])
    bad = Capture(**{**cap.__dict__, "cloud": PointCloud(np.zeros((1, 3)), Frame.SENSOR)})
    with pytest.raises(ValueError):
        to_world(bad, SensorRig(), MIRROR_X)


@pytest.mark.parametrize("seed", [0, 5])
def test_fused_points_lie_on_true_surfaces(seed):
    scene = randomized_scene(seed, "hard")
    result = run_pipeline(scene, NoiseModel.noiseless(), CONFIG)
    pts = result.fused.cloud.points
    assert result.fused.n_mirror > 0
    assert np.mean(np.abs(sdf(pts, scene)) < 1e-6) >= 0.99


def test_fused_mirror_points_are_on_real_side():
    scene = randomized_scene(2)
    result = run_pipeline(scene, NoiseModel(), CONFIG)
    via = result.fused.cloud.via_mirror
    assert np.all(scene.mirror.plane.signed_distance(result.fused.cloud.points[via]) > 0)


def test_box_top_height_in_bev(bare_scene):
    scene = SceneModel(boxes=[Box((0.1, 0.0, 0.12), (0.3, 0.2, 0.24))], mirror=bare_scene.mirror, sensor=bare_scene.sensor)
    noise = NoiseModel(sigma0=0.002)
    cap = render(scene, 0.0, noise, CONFIG.intrinsics)
    grid = bev_project(to_world(cap, scene.sensor, MIRROR_X), 0.01)
    inner = grid.cell_center(*np.nonzero(grid.occupied))
    inside = (np.abs(inner[:, 0] - 0.1) < 0.13) & (np.abs(inner[:, 1]) < 0.08)
    heights = grid.cells[grid.occupied][inside]
    # max of a few noisy samples per cell: within 4 sigma of the true top
    assert np.all(np.abs(heights - 0.24) < 4 * noise.sigma(1.9))


def test_single_box_detection_iou(bare_scene):
    box = Box((0.1, -0.05, 0.1), (0.3, 0.2, 0.2))
    scene = SceneModel(boxes=[box], mirror=bare_scene.mirror, sensor=bare_scene.sensor)
    config = PipelineConfig()
    cloud = to_world(render(scene, 0.0, NoiseModel.noiseless(), config.intrinsics), scene.sensor, MIRROR_X)
    dets = detect_objects(cloud, scene, config)
    assert len(dets) == 1
    assert polygon_iou(dets[0].corners(), box.footprint()) >= 0.9


def test_two_box_detection(bare_scene):
    boxes = [Box((-0.2, 0.0, 0.1), (0.2, 0.2, 0.2)), Box((0.2, 0.1, 0.1), (0.2, 0.25, 0.2), 0.3)]
    scene = SceneModel(boxes=boxes, mirror=bare_scene.mirror, sensor=bare_scene.sensor)
    cloud = to_world(render(scene, 0.0, NoiseModel.noiseless(), CONFIG.intrinsics), scene.sensor, MIRROR_X)
    assert len(detect_objects(cloud, scene, CONFIG)) == 2


def test_empty_grid_has_no_detections():
    assert detect_boxes(bev_project(PointCloud(np.zeros((0, 3)))), 0.03, 0.3) == []


def test_coverage_examples():
    ref = PointCloud(np.array([[0.0, 0, 0], [1.0, 0, 0]]))
    assert coverage(ref, ref) == 1.0
    assert coverage(PointCloud(np.array([[5.0, 5, 5]])), ref) == 0.0
    assert coverage(PointCloud(np.array([[0.005, 0, 0]])), ref) == 0.5
    with pytest.raises(ValueError):
        coverage(ref, PointCloud(np.zeros((0, 3))))


def _arm_top_centroid(scene, config):
    """Centroid of grid cells with arm material above the threshold, from vertical SDF probes."""
    x0, y0, x1, y1 = config.bounds
    cs = config.cell_size
    xs = x0 + (np.arange(round((x1 - x0) / cs)) + 0.5) * cs
    ys = y0 + (np.arange(round((y1 - y0) / cs)) + 0.5) * cs
    xx, yy = np.meshgrid(xs, ys)
    arm_only = SceneModel(boxes=[], mirror=scene.mirror, sensor=scene.sensor, arm=scene.arm)
    hit = np.zeros(xx.size, bool)
    for z in np.arange(scene.height_threshold + 0.0025, 2.0, 0.005):
        pts = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)], axis=1)
        hit |= sdf(pts, arm_only) < 0
    return np.array([xx.ravel()[hit].mean(), yy.ravel()[hit].mean()])


def test_occlusion_centroid_matches_arm_projection(bare_scene):
    arm = ArmModel(base=(-0.3, -0.7), base_yaw=math.pi / 2, joint_angles=(1.0, 1.0))
    scene = SceneModel(boxes=[Box((0.0, 0.0, 0.1), (0.2, 0.2, 0.2))], mirror=bare_scene.mirror, sensor=bare_scene.sensor, arm=arm)
    cloud = to_world(render(scene, 0.0, NoiseModel.noiseless(), PipelineConfig().intrinsics), scene.sensor, MIRROR_X)
    (region,) = find_occlusions(cloud, scene, PipelineConfig())
    expected = _arm_top_centroid(scene, PipelineConfig())
    assert np.linalg.norm(np.asarray(region.centroid) - expected) <= 1.5 * PipelineConfig().cell_size


def test_no_occlusion_means_direct_only(bare_scene):
    scene = SceneModel(boxes=[Box((0.0, 0.0, 0.1), (0.2, 0.2, 0.2))], mirror=bare_scene.mirror, sensor=bare_scene.sensor)
    result = run_pipeline(scene, NoiseModel(), CONFIG)
    assert result.reflect is None and result.theta == 0.0
    assert result.fused.n_mirror == 0
    assert len(result.detections) == 1


def test_unreachable_target_falls_back(bare_scene):
    # a mirror nearly parallel to the ground images every target above the sensor
    sensor = bare_scene.sensor
    from tiltmirror.scene import MirrorPatch

    center = (0.6, 0.6, 1.3)
    mirror = MirrorPatch(plane=Plane.from_normal((0.05, 0.0, 1.0), point=center), center=center, width=0.05, height=0.05)
    arm = ArmModel(base=(-0.3, -0.7), base_yaw=math.pi / 2, joint_angles=(1.0, 1.0))
    scene = SceneModel(boxes=[Box((0.0, 0.0, 0.1), (0.2, 0.2, 0.2))], mirror=mirror, sensor=sensor, arm=arm)
    with pytest.warns(PipelineWarning):
        result = run_pipeline(scene, NoiseModel(), CONFIG)
    assert result.reflect is None and result.target is not None


def test_pipeline_is_deterministic():
    scene = randomized_scene(4, "hard")
    a = run_pipeline(scene, NoiseModel(seed=9), CONFIG)
    b = run_pipeline(scene, NoiseModel(seed=9), CONFIG)
    assert np.array_equal(a.fused.cloud.points, b.fused.cloud.points)
    assert a.theta == b.theta


def test_mirror_data_never_lowers_coverage():
    from tiltmirror.evaluation import reference_points

    for seed in range(6):
        scene = randomized_scene(seed, "hard" if seed % 2 else "easy")
        r = run_pipeline(scene, NoiseModel(seed=seed), CONFIG)
        ref = reference_points(scene, [r.direct, r.reflect])
        if not len(ref):
            continue
        direct = fuse(r.direct, None, scene.sensor, householder_from_plane(scene.mirror.plane))
        assert coverage(r.fused, ref) >= coverage(direct, ref)
