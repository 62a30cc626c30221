import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from tiltmirror.geometry import (
    Frame,
    HomogeneousTransform,
    NormalizationError,
    NotAReflectionError,
    Plane,
    PointCloud,
    apply,
    householder_from_plane,
    plane_from_transform,
    rotation_about_axis,
    tilt_transform,
    world_from_tilted,
)



def unit_vectors(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


angles = st.floats(-1.5, 1.5)
radii = st.floats(0.0, 0.5)
unit = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1)


def plane_of(v, d):
    n = np.asarray(v) / np.linalg.norm(v)
    return Plane(*n, d)


def test_householder_ground_plane():
    assert_allclose(householder_from_plane(Plane(0, 0, 1, 0)).m, np.diag([1.0, 1.0, -1.0, 1.0]))


def test_householder_mirror_at_1_2():
    h = householder_from_plane(Plane(1, 0, 0, -1.2))
    assert_allclose(h.transform_points([0.5, 0, 0]), [[1.9, 0, 0]], atol=1e-12)


def test_householder_rejects_non_unit_normal():
    with pytest.raises(NormalizationError):
        householder_from_plane((1.0, 1.0, 0.0, 0.0))


@given(unit, st.floats(-3, 3))
def test_householder_is_involution(v, d):
    h = householder_from_plane(plane_of(v, d))
    assert_allclose((h @ h).m, np.eye(4), atol=1e-12)
    assert h.kind == "improper"


def test_tilt_zero_is_identity():
    for r in (0.0, 0.05, 0.3):
        assert_allclose(tilt_transform(0.0, r).m, np.eye(4), atol=0)


def test_tilt_quarter_turn_limit():
    # the closed form at theta -> pi/2, r = 0.1
    h = tilt_transform(math.nextafter(math.pi / 2, 0), 0.1)
    assert_allclose(h.rotation, [[0, 0, -1], [0, 1, 0], [1, 0, 0]], atol=1e-12)
    assert_allclose(h.t, [-0.1, 0, -0.1], atol=1e-12)


def test_tilt_domain():
    with pytest.raises(ValueError):
        tilt_transform(math.pi / 2, 0.1)
    with pytest.raises(ValueError):
        tilt_transform(0.1, -0.01)


@given(angles, radii)
def test_tilt_is_rotation_about_pivot(theta, r):
    # T(p) R T(-p) with pivot p = (0, 0, -r), written out independently
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, 0, -s], [0, 1, 0], [s, 0, c]])
    p = np.array([0.0, 0.0, -r])
    expected = (
        HomogeneousTransform.translation(p)
        @ HomogeneousTransform.from_rt(rot, np.zeros(3))
        @ HomogeneousTransform.translation(-p)
    )
    h = tilt_transform(theta, r)
    assert_allclose(h.m, expected.m, atol=1e-12)
    assert_allclose(h.transform_points(p)[0], p, atol=1e-12)
    assert h.kind == "proper"


@given(angles)
def test_tilt_turns_view_toward_positive_x(theta):
    view = tilt_transform(theta, 0.05).transform_directions([0, 0, -1])[0]
    assert_allclose(view, [math.sin(theta), 0, -math.cos(theta)], atol=1e-12)


def test_isometry_random_pairs(rng):
    for _ in range(200):
        n = unit_vectors(rng, 1)[0]
        hs = [householder_from_plane(Plane(*n, rng.uniform(-2, 2))), tilt_transform(rng.uniform(-1.5, 1.5), rng.uniform(0, 0.3))]
        x, y = rng.uniform(-3, 3, (2, 3))
        for h in hs:
            a, b = h.transform_points(np.stack([x, y]))
            assert abs(np.linalg.norm(a - b) - np.linalg.norm(x - y)) < 1e-9


def test_plane_round_trip(rng):
    for n in unit_vectors(rng, 300):
        p = Plane(*n, rng.uniform(-2, 2)).canonical()
        q = plane_from_transform(householder_from_plane(p))
        assert_allclose(q.as_tuple(), p.as_tuple(), atol=1e-10)


def test_plane_from_transform_canonical_sign():
    q = plane_from_transform(householder_from_plane(Plane(0, 0, -1, 0)))
    assert q.as_tuple() == pytest.approx((0, 0, 1, 0), abs=1e-12)


def test_plane_from_proper_transform_raises():
    with pytest.raises(NotAReflectionError):
        plane_from_transform(tilt_transform(0.3, 0.1))


def test_plane_from_improper_non_reflection_raises():
    # a reflection composed with a rotation about the plane normal is improper but not a pure reflection
    h = householder_from_plane(Plane(1, 0, 0, 0)) @ HomogeneousTransform.from_rt(rotation_about_axis([1, 0, 0], 0.3), [0, 0, 0])
    with pytest.raises(NotAReflectionError):
        plane_from_transform(h)


def test_transform_validation():
    with pytest.raises(ValueError):
        HomogeneousTransform(np.eye(3))
    bad = np.eye(4)
    bad[0, 0] = 2.0
    with pytest.raises(ValueError):
        HomogeneousTransform(bad)


def test_apply_identity_and_translation():
    cloud = PointCloud(np.zeros((1, 3)), Frame.SENSOR, [True])
    same = apply(HomogeneousTransform.identity(), cloud, Frame.SENSOR)
    assert_allclose(same.points, cloud.points)
    moved = apply(HomogeneousTransform.translation([1, 0, 0]), cloud, Frame.WORLD)
    assert_allclose(moved.points, [[1, 0, 0]])
    assert moved.frame == Frame.WORLD
    assert moved.via_mirror.tolist() == [True]


def test_apply_composes(rng):
    cloud = PointCloud(rng.uniform(-1, 1, (50, 3)))
    t1 = tilt_transform(0.4, 0.05)
    t2 = householder_from_plane(Plane(1, 0, 0, -1.2))
    a = apply(t2, apply(t1, cloud, Frame.SENSOR), Frame.WORLD)
    b = apply(t2 @ t1, cloud, Frame.WORLD)
    assert_allclose(a.points, b.points, atol=1e-12)


def test_cloud_rejects_mixed_frames():
    a = PointCloud(np.zeros((1, 3)), Frame.WORLD)
    b = PointCloud(np.zeros((1, 3)), Frame.SENSOR)
    with pytest.raises(ValueError):
        PointCloud.concatenate([a, b])


def test_cloud_rejects_nonfinite():
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.nan, 0.0]]))


def test_world_from_tilted_keeps_pivot():
    h = world_from_tilted((0.0, 0.0, 2.1), 0.7, 0.05)
    assert_allclose(h.transform_points([0, 0, -0.05])[0], [0, 0, 2.05], atol=1e-12)


def test_orthonormalized_repairs_drift(rng):
    h = tilt_transform(0.3, 0.05)
    for _ in range(1000):
        h = h @ tilt_transform(0.001, 0.05)
    fixed = h.orthonormalized()
    assert_allclose(fixed.rotation @ fixed.rotation.T, np.eye(3), atol=1e-14)
