"""Frames, homogeneous transforms, mirror (Householder) and tilt transforms.

Frame conventions used throughout the package:

* ``World``: origin on the ground directly below the sensor, Z up, X pointing
  horizontally toward the mirror, Y along the tilt axis.
* ``Sensor``: the untilted sensor frame, axes parallel to ``World``, origin at
  the optical center.
* ``TiltedSensor``: the sensor frame after tilting by ``theta`` about Y.  The
  camera looks along -Z of this frame.

``tilt_transform`` maps TiltedSensor -> Sensor; a pure translation by the
sensor position maps Sensor -> World.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np

ORTHO_TOL = 1e-9
UNIT_TOL = 1e-12


class NormalizationError(ValueError):
    """Plane normal is not unit length."""


class NotAReflectionError(ValueError):
    """Transform is not (close enough to) a pure planar reflection."""


class Frame(str, Enum):
    WORLD = "World"
    SENSOR = "Sensor"
    TILTED = "TiltedSensor"


@dataclass(frozen=True)
class HomogeneousTransform:
    """4x4 rigid or reflection transform, translation in meters."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("bottom row must be (0, 0, 0, 1)")
        if not np.all(np.isfinite(m)):
            raise ValueError("transform has non-finite entries")
        r = m[:3, :3]
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL:
            raise ValueError("rotation block is not orthogonal")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "HomogeneousTransform":
        return cls(np.eye(4))

    @classmethod
    def from_rt(cls, rotation, translation) -> "HomogeneousTransform":
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(m)

    @classmethod
    def translation(cls, t) -> "HomogeneousTransform":
        return cls.from_rt(np.eye(3), t)

    @property
    def rotation(self) -> np.ndarray:
        return self.m[:3, :3]

    @property
    def t(self) -> np.ndarray:
        return self.m[:3, 3]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.rotation))

    @property
    def kind(self) -> str:
        return "proper" if self.det > 0 else "improper"

    def __matmul__(self, other: "HomogeneousTransform") -> "HomogeneousTransform":
        return HomogeneousTransform(self.m @ other.m)

    def inverse(self) -> "HomogeneousTransform":
        rt = self.rotation.T
        return HomogeneousTransform.from_rt(rt, -rt @ self.t)

    def transform_points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return pts @ self.rotation.T + self.t

    def transform_directions(self, dirs) -> np.ndarray:
        return np.asarray(dirs, dtype=float).reshape(-1, 3) @ self.rotation.T

    def orthonormalized(self) -> "HomogeneousTransform":
        """Polar projection of the rotation block; keeps the determinant sign."""
        u, _, vt = np.linalg.svd(self.rotation)
        r = u @ vt
        return HomogeneousTransform.from_rt(r, self.t)


@dataclass(frozen=True)
class Plane:
    """Plane ``a x + b y + c z + d = 0`` with unit normal (a, b, c)."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.d)
        if not all(np.isfinite(vals)):
            raise ValueError("plane coefficients must be finite")
        norm2 = self.a**2 + self.b**2 + self.c**2
        if abs(norm2 - 1.0) > UNIT_TOL:
            raise NormalizationError(f"plane normal has squared norm {norm2!r}, expected 1")
        for name in ("a", "b", "c", "d"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_normal(cls, normal, d: float = 0.0, *, point=None) -> "Plane":
        """Build a plane from a (not necessarily unit) normal and offset or point."""
        n = np.asarray(normal, dtype=float)
        length = np.linalg.norm(n)
        if length == 0:
            raise NormalizationError("zero normal")
        n = n / length
        if point is not None:
            d = -float(n @ np.asarray(point, dtype=float))
        else:
            d = d / length
        return cls(*n, d)

    @property
    def normal(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def signed_distance(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return pts @ self.normal + self.d

    def foot_point(self) -> np.ndarray:
        """Point of the plane closest to the origin."""
        return -self.d * self.normal

    def flipped(self) -> "Plane":
        return Plane(-self.a, -self.b, -self.c, -self.d)

    def canonical(self) -> "Plane":
        """Same plane with the sign convention a >= 0, then b >= 0, then c >= 0."""
        for v in (self.a, self.b, self.c):
            if v > 0:
                return self
            if v < 0:
                return self.flipped()
        return self


PlaneLike = Union[Plane, Sequence[float]]


def _as_plane(plane: PlaneLike) -> Plane:
    if isinstance(plane, Plane):
        return plane
    a, b, c, d = (float(v) for v in plane)
    return Plane(a, b, c, d)


def householder_from_plane(plane: PlaneLike) -> HomogeneousTransform:
    """Mirror-image transform across ``plane``: rotation ``I - 2 n n^T``, translation ``-2 d n``."""
    p = _as_plane(plane)
    n = p.normal
    return HomogeneousTransform.from_rt(np.eye(3) - 2.0 * np.outer(n, n), -2.0 * p.d * n)


def tilt_transform(theta: float, r: float) -> HomogeneousTransform:
    """TiltedSensor -> Sensor transform for tilt ``theta`` (rad) about Y and tilt radius ``r`` (m).

    The tilt pivot sits at (0, 0, -r) in the Sensor frame and is a fixed point
    of the returned transform.
    """
    if not abs(theta) < np.pi / 2:
        raise ValueError(f"tilt angle {theta!r} outside (-pi/2, pi/2)")
    if r < 0:
        raise ValueError(f"tilt radius {r!r} must be >= 0")
    c, s = np.cos(theta), np.sin(theta)
    m = np.array(
        [
            [c, 0.0, -s, -r * s],
            [0.0, 1.0, 0.0, 0.0],
            [s, 0.0, c, -r * (1.0 - c)],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    return HomogeneousTransform(m)


def plane_from_transform(h: HomogeneousTransform, tol: float = 1e-6) -> Plane:
    """Recover the mirror plane of a reflection transform (canonical sign).

    Raises NotAReflectionError if ``h`` is proper or if the re-synthesized
    reflection differs from ``h`` by more than ``tol`` in any entry.
    """
    m = h.m if isinstance(h, HomogeneousTransform) else np.asarray(h, dtype=float)
    r, t = m[:3, :3], m[:3, 3]
    if np.linalg.det(r) > 0:
        raise NotAReflectionError("transform is proper (det = +1), not a reflection")
    sym = 0.5 * (np.eye(3) - 0.5 * (r + r.T))
    w, v = np.linalg.eigh(sym)
    n = v[:, np.argmax(w)]
    d = -0.5 * float(n @ t)
    plane = Plane.from_normal(n, d).canonical()
    rebuilt = householder_from_plane(plane).m
    residual = float(np.max(np.abs(rebuilt - m)))
    if residual > tol:
        raise NotAReflectionError(f"reflection residual {residual:.3g} exceeds tolerance {tol:.3g}")
    return plane


def rotation_y(theta: float) -> np.ndarray:
    """Rotation about Y with the same sign convention as ``tilt_transform``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Right-handed rotation matrix (Rodrigues)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def rotation_angle(rotation: np.ndarray) -> float:
    """Rotation angle (rad) of a proper rotation matrix."""
    c = (np.trace(rotation) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True)
class PointCloud:
    """Points in meters tagged with a frame and a per-point via-mirror flag."""

    points: np.ndarray
    frame: Frame = Frame.WORLD
    via_mirror: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud has non-finite coordinates")
        vm = self.via_mirror
        vm = np.zeros(len(pts), dtype=bool) if vm is None else np.array(vm, dtype=bool).reshape(-1)
        if len(vm) != len(pts):
            raise ValueError("via_mirror length does not match point count")
        pts.setflags(write=False)
        vm.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "via_mirror", vm)
        object.__setattr__(self, "frame", Frame(self.frame))

    def __len__(self) -> int:
        return len(self.points)

    def select(self, mask) -> "PointCloud":
        mask = np.asarray(mask)
        return PointCloud(self.points[mask], self.frame, self.via_mirror[mask])

    @staticmethod
    def concatenate(clouds: Sequence["PointCloud"]) -> "PointCloud":
        frames = {c.frame for c in clouds}
        if len(frames) > 1:
            raise ValueError(f"cannot concatenate clouds in different frames: {sorted(f.value for f in frames)}")
        if not clouds:
            return PointCloud(np.empty((0, 3)))
        return PointCloud(
            np.concatenate([c.points for c in clouds]),
            clouds[0].frame,
            np.concatenate([c.via_mirror for c in clouds]),
        )


def apply(t: HomogeneousTransform, cloud: PointCloud, new_frame: Frame | str) -> PointCloud:
    """Map every point of ``cloud`` by ``t`` and relabel it as ``new_frame``."""
    return PointCloud(t.transform_points(cloud.points), new_frame, cloud.via_mirror)


def world_from_tilted(position, theta: float, r: float) -> HomogeneousTransform:
    """TiltedSensor -> World for a sensor whose untilted optical center is ``position``."""
    return HomogeneousTransform.translation(position) @ tilt_transform(theta, r)


@dataclass(frozen=True)
class SensorRig:
    """Depth sensor on a tilt unit.

    ``position`` is the optical center at zero tilt (World frame), ``tilt_radius``
    the distance from the optical center down to the tilt pivot.
    """

    position: tuple[float, float, float] = (0.0, 0.0, 2.1)
    tilt_radius: float = 0.05
    tilt_angle: float = 0.0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3 or not all(np.isfinite(pos)):
            raise ValueError(f"invalid sensor position {self.position!r}")
        if self.tilt_radius < 0:
            raise ValueError("tilt_radius must be >= 0")
        if not abs(self.tilt_angle) < np.pi / 2:
            raise ValueError("tilt_angle must lie in (-pi/2, pi/2)")
        object.__setattr__(self, "position", pos)

    def world_from_tilted(self, theta: float | None = None) -> HomogeneousTransform:
        theta = self.tilt_angle if theta is None else theta
        return world_from_tilted(self.position, theta, self.tilt_radius)

    def with_tilt(self, theta: float) -> "SensorRig":
        return SensorRig(self.position, self.tilt_radius, theta)
