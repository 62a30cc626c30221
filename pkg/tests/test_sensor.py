import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tiltmirror.geometry import Frame, householder_from_plane
from tiltmirror.scene import Box, SceneModel, randomized_scene
from oracles import sdf, sphere_trace
from tiltmirror.sensor import (
    BOX,
    GROUND,
    CameraIntrinsics,
    NoiseModel,
    derive_seed,
    perturb_ranges,
    reflect_working_distance,
    render,
    render_mirror_image_sensor,
)

SMALL = CameraIntrinsics(48, 36)


def world_rays(scene, cap, intrinsics):
    local = intrinsics.ray_directions()[cap.pixel_index]
    return cap.world_from_sensor.t, cap.world_from_sensor.transform_directions(local)


@pytest.mark.parametrize("seed, theta", [(1, 0.0), (2, 0.5), (5, 0.75)])
def test_direct_ranges_match_sphere_tracing(seed, theta):
    scene = randomized_scene(seed, "hard")
    cap = render(scene, theta, NoiseModel.noiseless(), SMALL)
    origin, dirs = world_rays(scene, cap, SMALL)
    direct = ~cap.cloud.via_mirror
    ranges = np.linalg.norm(cap.cloud.points, axis=1)
    t = sphere_trace(np.broadcast_to(origin, dirs[direct].shape), dirs[direct], scene)
    assert direct.sum() > 500
    assert_allclose(ranges[direct], t, atol=1e-5)


@pytest.mark.parametrize("seed", [0, 3, 4])
def test_mirror_ranges_are_segment_sums(seed):
    scene = randomized_scene(seed)
    cap = render(scene, 0.75, NoiseModel.noiseless(), SMALL)
    origin, dirs = world_rays(scene, cap, SMALL)
    via = cap.cloud.via_mirror
    assert via.sum() > 200
    bounce = cap.bounce_points[via]
    n = scene.mirror.plane.normal
    assert_allclose(scene.mirror.plane.signed_distance(bounce), 0, atol=1e-9)
    d2 = dirs[via] - 2 * (dirs[via] @ n)[:, None] * n
    t2 = sphere_trace(bounce, d2, scene)
    expected = np.linalg.norm(bounce - origin, axis=1) + t2
    assert_allclose(np.linalg.norm(cap.cloud.points[via], axis=1), expected, atol=1e-5)


def test_virtual_points_realize_onto_surfaces():
    scene = randomized_scene(6, "hard")
    cap = render(scene, 0.75, NoiseModel.noiseless(), SMALL)
    world = cap.world_cloud()
    via = world.via_mirror
    realized = householder_from_plane(scene.mirror.plane).transform_points(world.points[via])
    assert_allclose(realized, cap.surface_points[via], atol=1e-9)
    assert_allclose(world.points[~via], cap.surface_points[~via], atol=1e-9)


def test_virtual_points_lie_behind_mirror():
    scene = randomized_scene(6)
    cap = render(scene, 0.75, NoiseModel.noiseless(), SMALL)
    virt = cap.world_cloud().points[cap.cloud.via_mirror]
    assert np.all(scene.mirror.plane.signed_distance(virt) < 0)


def test_mirror_image_sensor_sees_the_same_surfaces():
    scene = randomized_scene(2)
    cap = render_mirror_image_sensor(scene, 0.75, NoiseModel.noiseless(), SMALL)
    assert cap.cloud.frame == Frame.WORLD
    assert not cap.cloud.via_mirror.any()
    assert np.abs(sdf(cap.cloud.points, scene)).max() < 1e-6


def test_occluded_ground_is_not_returned(bare_scene):
    # a tall box right under the sensor casts a shadow on the ground
    scene = SceneModel(boxes=[Box((0, 0, 0.4), (0.3, 0.3, 0.8))], mirror=bare_scene.mirror, sensor=bare_scene.sensor)
    cap = render(scene, 0.0, NoiseModel.noiseless(), SMALL)
    ground = cap.surface_points[cap.labels == GROUND]
    # central projection of the box top from the sensor covers |x|,|y| <= 0.15 * 2.1 / 1.3
    shadow = 0.15 * 2.1 / 1.3
    assert not np.any((np.abs(ground[:, 0]) < shadow - 0.01) & (np.abs(ground[:, 1]) < shadow - 0.01))
    assert np.any(cap.labels == BOX)


@pytest.mark.parametrize("exponent", [1, 2])
def test_noise_sigma_follows_distance_law(exponent):
    noise = NoiseModel(sigma0=0.01, d0=2.0, exponent=exponent, dropout_threshold=0.0)
    n = 20000
    for dist in (1.0, 2.0, 3.0):
        samples = []
        for seed in range(5):
            r = perturb_ranges(np.full(n, dist), np.arange(n), noise.with_seed(seed), n)
            samples.append(r - dist)
        est = np.std(np.concatenate(samples))
        target = 0.01 * (dist / 2.0) ** exponent
        assert abs(est / target - 1) < 0.1


def test_rendered_noise_sigma_on_flat_ground(bare_scene):
    noise = NoiseModel(sigma0=0.01, exponent=2, dropout_threshold=0.0)
    clean = render(bare_scene, 0.0, NoiseModel.noiseless(), SMALL)
    errs, sig = [], []
    for seed in range(10):
        cap = render(bare_scene, 0.0, noise.with_seed(seed), SMALL)
        direct = ~cap.cloud.via_mirror
        r0 = np.linalg.norm(clean.cloud.points[direct], axis=1)
        errs.append((np.linalg.norm(cap.cloud.points[direct], axis=1) - r0) / noise.sigma(r0))
    assert abs(np.std(np.concatenate(errs)) - 1) < 0.1


def test_noise_is_reproducible_and_seeded(bare_scene):
    a = render(bare_scene, 0.3, NoiseModel(seed=4), SMALL)
    b = render(bare_scene, 0.3, NoiseModel(seed=4), SMALL)
    c = render(bare_scene, 0.3, NoiseModel(seed=5), SMALL)
    assert np.array_equal(a.depth_image, b.depth_image)
    assert not np.array_equal(a.depth_image, c.depth_image)


def test_dropout_removes_weak_returns(bare_scene):
    far = NoiseModel(sigma0=0.0, dropout_threshold=10.0)
    assert len(render(bare_scene, 0.0, far, SMALL).cloud) == 0


def test_depth_image_layout(bare_scene):
    cap = render(bare_scene, 0.0, NoiseModel.noiseless(), SMALL)
    assert cap.depth_image.shape == (SMALL.height, SMALL.width)
    flat = cap.depth_image.ravel()
    assert_allclose(flat[cap.pixel_index], np.linalg.norm(cap.cloud.points, axis=1))
    # straight down at the image center the range is the sensor height
    center = cap.depth_image[SMALL.height // 2 - 1 : SMALL.height // 2 + 1, SMALL.width // 2 - 1 : SMALL.width // 2 + 1]
    assert center.min() == pytest.approx(2.1, abs=0.01)


def test_ray_directions_axes():
    d = CameraIntrinsics(3, 3).ray_directions()
    assert_allclose(d[4], [0, 0, -1])
    assert d[5, 0] > 0 and d[1, 1] > 0


@pytest.mark.parametrize("theta, expected", [(0.0, 1.0), (math.pi / 3, 2.0), (-math.pi / 4, math.sqrt(2))])
def test_reflect_working_distance(theta, expected):
    assert reflect_working_distance(theta) == pytest.approx(expected)


def test_reflect_working_distance_domain():
    with pytest.raises(ValueError):
        reflect_working_distance(math.pi / 2)


def test_derive_seed_streams_differ():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert len({derive_seed(0, k) for k in range(100)}) == 100


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(1, 10)
    with pytest.raises(ValueError):
        CameraIntrinsics(horizontal_fov=math.pi)


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseModel(exponent=3)
    with pytest.raises(ValueError):
        NoiseModel(sigma0=-1)


def test_arm_is_rendered():
    scene = randomized_scene(0)
    cap = render(scene, 0.0, NoiseModel.noiseless(), SMALL)
    assert np.any((cap.labels >= 10) & (cap.labels < 100))


def test_reflectance_out_of_range():
    from tiltmirror.scene import MirrorPatch

    m = randomized_scene(0).mirror
    with pytest.raises(ValueError):
        MirrorPatch(plane=m.plane, center=m.center, reflectance=1.5)


@pytest.mark.parametrize("exponent", [1, 2])
def test_fixed_pixel_sigma(bare_scene, exponent):
    # one pixel, 1e5 independent seeds
    noise = NoiseModel(sigma0=0.005, exponent=exponent, dropout_threshold=0.0)
    d = 2.1
    z = np.array([perturb_ranges([d], [0], noise.with_seed(s), 1)[0] for s in range(100_000)])
    assert abs(np.std(z) / noise.sigma(d) - 1) < 0.1
    assert abs(np.mean(z) - d) < 4 * noise.sigma(d) / math.sqrt(len(z))


def test_sigma_doubles_at_sixty_degrees(bare_scene):
    """Linear noise: a surface point seen through a 60 degree tilt path is twice as far, so sigma doubles."""
    noise = NoiseModel(sigma0=0.005, exponent=1, dropout_threshold=0.0)
    center = SMALL.height // 2 * SMALL.width + SMALL.width // 2
    theta = math.pi / 3

    def sigma_at(t):
        draws = []
        for seed in range(2000):
            cap = render(bare_scene, t, noise.with_seed(seed), SMALL)
            draws.append(cap.depth_image.ravel()[center])
        return np.std(draws), np.mean(draws)

    s0, d0 = sigma_at(0.0)
    s60, d60 = sigma_at(theta)
    assert d60 / d0 == pytest.approx(reflect_working_distance(theta), rel=0.05)
    assert abs(s60 / s0 / 2 - 1) < 0.15


def test_arm_shadow_has_no_direct_box_top_points():
    for seed in range(10):
        scene = randomized_scene(seed)
        cap = render(scene, 0.0, NoiseModel.noiseless(), CameraIntrinsics(160, 120))
        target = scene.boxes[scene.arm_target]
        top = cap.surface_points[(cap.labels == BOX + scene.arm_target) & ~cap.cloud.via_mirror]
        top = top[np.abs(top[:, 2] - target.top) < 1e-9]
        if not len(top):
            continue
        # every returned top-face point must see the sensor along a clear ray
        origin = np.asarray(scene.sensor.position)
        to_sensor = origin - top
        dist = np.linalg.norm(to_sensor, axis=1)
        start = top + 1e-6 * to_sensor / dist[:, None]
        t = sphere_trace(start, to_sensor / dist[:, None], scene, far=10.0)
        assert np.all(t >= dist - 1e-4)
