"""Pinhole depth-camera ray caster with a single mirror bounce.

Rays start at the tilted optical center.  If the nearest hit is the front
face of the mirror, the ray is reflected once and continues; the recorded
point is then the virtual image (origin + direction * total path length in
the TiltedSensor frame).  Range noise is Gaussian along the ray with
sigma(D) = sigma0 * (D / D0) ** p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Frame, HomogeneousTransform, PointCloud, householder_from_plane
from .scene import Box, Capsule, MirrorPatch, SceneModel, arm_capsules

EPS = 1e-9
NO_HIT = -1
GROUND = 0
MIRROR = 1
MIRROR_BACK = 2
ARM = 10  # ARM + capsule index
BOX = 100  # BOX + box index
FIXTURE = 1000  # FIXTURE + fixture index


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 160
    height: int = 120
    horizontal_fov: float = math.radians(60.0)
    vertical_fov: float = math.radians(45.0)

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("image must be at least 2x2 pixels")
        for fov in (self.horizontal_fov, self.vertical_fov):
            if not 0 < fov < math.pi:
                raise ValueError(f"field of view {fov} outside (0, pi)")

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions in the TiltedSensor frame, row-major (H*W, 3).

        Image columns run along +X, rows along -Y; the optical axis is -Z.
        """
        u = (2 * np.arange(self.width) + 1 - self.width) / self.width
        v = (self.height - 1 - 2 * np.arange(self.height)) / self.height
        x = u * math.tan(self.horizontal_fov / 2)
        y = v * math.tan(self.vertical_fov / 2)
        xx, yy = np.meshgrid(x, y)
        d = np.stack([xx.ravel(), yy.ravel(), -np.ones(xx.size)], axis=1)
        return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass(frozen=True)
class NoiseModel:
    sigma0: float = 0.002
    d0: float = 2.0
    exponent: int = 2
    dropout_threshold: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be >= 0")
        if self.d0 <= 0:
            raise ValueError("d0 must be > 0")
        if self.exponent not in (1, 2):
            raise ValueError("exponent must be 1 or 2")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseModel":
        return cls(sigma0=0.0, dropout_threshold=0.0, seed=seed)

    def sigma(self, distance) -> np.ndarray:
        return self.sigma0 * (np.asarray(distance, dtype=float) / self.d0) ** self.exponent

    def signal(self, distance, reflectance=1.0) -> np.ndarray:
        """Received-signal proxy: reflectance^2 * (D0 / D)^2."""
        return np.asarray(reflectance, dtype=float) ** 2 * (self.d0 / np.asarray(distance, dtype=float)) ** 2

    def with_seed(self, seed: int) -> "NoiseModel":
        return replace(self, seed=int(seed))


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for an independent random stream."""
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])


def perturb_ranges(ranges, pixel_index, noise: NoiseModel, n_pixels: int) -> np.ndarray:
    """Add range noise; the normal draw for a ray depends only on (seed, pixel index)."""
    ranges = np.asarray(ranges, dtype=float)
    if noise.sigma0 == 0:
        return ranges.copy()
    z = np.random.default_rng(noise.seed).standard_normal(n_pixels)
    return ranges + noise.sigma(ranges) * z[pixel_index]


@dataclass(frozen=True)
class Capture:
    """One depth capture.  ``cloud`` is in the TiltedSensor frame."""

    cloud: PointCloud
    depth_image: np.ndarray
    tilt_angle: float
    labels: np.ndarray
    pixel_index: np.ndarray
    surface_points: np.ndarray  # true (noiseless) world hit point per return
    bounce_points: np.ndarray  # world mirror hit per return, NaN for direct returns
    world_from_sensor: HomogeneousTransform = field(default_factory=HomogeneousTransform.identity)

    def world_cloud(self) -> PointCloud:
        """Points mapped to World (mirror returns stay virtual)."""
        if self.cloud.frame == Frame.WORLD:
            return self.cloud
        return PointCloud(self.world_from_sensor.transform_points(self.cloud.points), Frame.WORLD, self.cloud.via_mirror)


# ---------------------------------------------------------------------------
# ray / primitive intersection (vectorized over rays); inf = no hit
# ---------------------------------------------------------------------------


def intersect_ground(o: np.ndarray, d: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -o[:, 2] / d[:, 2]
    return np.where((d[:, 2] < 0) & (t > EPS), t, np.inf)


def intersect_box(o: np.ndarray, d: np.ndarray, box: Box) -> np.ndarray:
    rot = box.rotation
    p = (o - box.center) @ rot
    q = d @ rot
    h = box.half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / q
        t1 = (-h - p) * inv
        t2 = (h - p) * inv
    # rays parallel to a slab: inside -> (-inf, inf), outside -> empty
    par = q == 0
    inside = np.abs(p) <= h
    t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
    t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
    tnear = np.max(np.minimum(t1, t2), axis=1)
    tfar = np.min(np.maximum(t1, t2), axis=1)
    hit = (tnear <= tfar) & (tnear > EPS)
    return np.where(hit, tnear, np.inf)


def intersect_capsule(o: np.ndarray, d: np.ndarray, cap: Capsule) -> np.ndarray:
    pa, pb, r = np.asarray(cap.p0), np.asarray(cap.p1), cap.radius
    ba = pb - pa
    oa = o - pa
    baba = ba @ ba
    bard = d @ ba
    baoa = oa @ ba
    rdoa = np.einsum("ij,ij->i", d, oa)
    oaoa = np.einsum("ij,ij->i", oa, oa)
    a = baba - bard * bard
    b = baba * rdoa - baoa * bard
    c = baba * oaoa - baoa * baoa - r * r * baba
    disc = b * b - a * c
    t = np.full(len(o), np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_body = (-b - np.sqrt(disc)) / a
    y = baoa + t_body * bard
    body = (a > 1e-12) & (disc >= 0) & (y > 0) & (y < baba) & (t_body > EPS)
    t[body] = t_body[body]

    # spherical caps
    for center in (pa, pb):
        oc = o - center
        bb = np.einsum("ij,ij->i", d, oc)
        cc = np.einsum("ij,ij->i", oc, oc) - r * r
        hh = bb * bb - cc
        with np.errstate(invalid="ignore"):
            tc = -bb - np.sqrt(hh)
        ok = (hh >= 0) & (tc > EPS) & (cc > 0)
        t = np.where(ok & (tc < t), tc, t)
    return t


def intersect_mirror(o: np.ndarray, d: np.ndarray, mirror: MirrorPatch) -> tuple[np.ndarray, np.ndarray]:
    """Hit distance on the mirror rectangle and whether the front face was hit."""
    n = mirror.plane.normal
    denom = d @ n
    u, v = mirror.axes()
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -(o @ n + mirror.plane.d) / denom
        rel = o + t[:, None] * d - np.asarray(mirror.center)
        inside = (np.abs(rel @ u) <= mirror.width / 2) & (np.abs(rel @ v) <= mirror.height / 2)
    hit = (denom != 0) & (t > EPS) & inside
    return np.where(hit, t, np.inf), denom < 0


def _nearest(o: np.ndarray, d: np.ndarray, scene: SceneModel, include_mirror: bool):
    """Nearest hit distance and label for each ray."""
    best = intersect_ground(o, d)
    label = np.where(np.isfinite(best), GROUND, NO_HIT)

    def take(t, lab):
        nonlocal best, label
        closer = t < best
        best = np.where(closer, t, best)
        label = np.where(closer, lab, label)

    for i, box in enumerate(scene.boxes):
        take(intersect_box(o, d, box), BOX + i)
    for i, box in enumerate(scene.fixtures):
        take(intersect_box(o, d, box), FIXTURE + i)
    if scene.arm is not None:
        for i, cap in enumerate(arm_capsules(scene.arm)):
            take(intersect_capsule(o, d, cap), ARM + i)
    if include_mirror:
        t, front = intersect_mirror(o, d, scene.mirror)
        take(t, np.where(front, MIRROR, MIRROR_BACK))
    return best, label


def trace(scene: SceneModel, origins: np.ndarray, dirs: np.ndarray, include_mirror: bool = True):
    """Trace rays with at most one mirror bounce.

    Returns (path_length, label, surface_point, bounce_point, via_mirror);
    path_length is inf for non-returns.
    """
    n = len(origins)
    t1, lab1 = _nearest(origins, dirs, scene, include_mirror)
    length = t1.copy()
    label = lab1.copy()
    surface = origins + np.where(np.isfinite(t1), t1, 0.0)[:, None] * dirs
    bounce = np.full((n, 3), np.nan)
    via = lab1 == MIRROR

    if np.any(via):
        idx = np.flatnonzero(via)
        hit = surface[idx]
        refl = householder_from_plane(scene.mirror.plane).rotation
        d2 = dirs[idx] @ refl.T
        t2, lab2 = _nearest(hit, d2, scene, include_mirror=True)
        ok = np.isfinite(t2) & (lab2 != MIRROR) & (lab2 != MIRROR_BACK)
        bounce[idx] = hit
        length[idx] = np.where(ok, t1[idx] + t2, np.inf)
        label[idx] = np.where(ok, lab2, NO_HIT)
        surface[idx] = hit + np.where(ok, t2, 0.0)[:, None] * d2

    dead = (label == NO_HIT) | (label == MIRROR_BACK)
    length[dead] = np.inf
    return length, label, surface, bounce, via


def reflect_working_distance(theta: float) -> float:
    """Working distance through the mirror relative to direct sensing: 1 / cos(theta)."""
    if not abs(theta) < math.pi / 2:
        raise ValueError(f"tilt angle {theta!r} outside the open interval (-pi/2, pi/2)")
    return 1.0 / math.cos(theta)


def _finish(
    scene: SceneModel,
    theta: float,
    noise: NoiseModel,
    intrinsics: CameraIntrinsics,
    dirs_local: np.ndarray,
    traced,
    to_frame: HomogeneousTransform,
    frame: Frame,
    reflectance: float,
) -> Capture:
    length, label, surface, bounce, via = traced
    n_pix = len(dirs_local)
    returned = np.isfinite(length)
    sig = noise.signal(np.where(returned, length, 1.0), np.where(via, reflectance, 1.0))
    keep = returned & (sig >= noise.dropout_threshold)
    idx = np.flatnonzero(keep)
    ranges = perturb_ranges(length[idx], idx, noise, n_pix)
    pts = dirs_local[idx] * ranges[:, None]
    depth = np.zeros(n_pix)
    depth[idx] = ranges
    cloud = PointCloud(pts, frame, via[idx])
    return Capture(
        cloud=cloud,
        depth_image=depth.reshape(intrinsics.height, intrinsics.width),
        tilt_angle=float(theta),
        labels=label[idx],
        pixel_index=idx,
        surface_points=surface[idx],
        bounce_points=bounce[idx],
        world_from_sensor=to_frame,
    )


def render(
    scene: SceneModel,
    theta: float = 0.0,
    noise: Optional[NoiseModel] = None,
    intrinsics: Optional[CameraIntrinsics] = None,
) -> Capture:
    """Render one depth capture with the sensor tilted by ``theta``."""
    noise = NoiseModel() if noise is None else noise
    intrinsics = CameraIntrinsics() if intrinsics is None else intrinsics
    pose = scene.sensor.world_from_tilted(theta)
    local = intrinsics.ray_directions()
    dirs = pose.transform_directions(local)
    origins = np.broadcast_to(pose.t, dirs.shape).copy()
    traced = trace(scene, origins, dirs, include_mirror=True)
    return _finish(scene, theta, noise, intrinsics, local, traced, pose, Frame.TILTED, scene.mirror.reflectance)


def render_mirror_image_sensor(
    scene: SceneModel,
    theta: float,
    noise: Optional[NoiseModel] = None,
    intrinsics: Optional[CameraIntrinsics] = None,
) -> Capture:
    """Capture from a second sensor at the mirror image of the tilted sensor, mirror removed.

    The returned cloud is already in the World frame (no via-mirror points).
    """
    noise = NoiseModel() if noise is None else noise
    intrinsics = CameraIntrinsics() if intrinsics is None else intrinsics
    pose = householder_from_plane(scene.mirror.plane) @ scene.sensor.world_from_tilted(theta)
    local = intrinsics.ray_directions()
    dirs = pose.transform_directions(local)
    origins = np.broadcast_to(pose.t, dirs.shape).copy()
    traced = trace(scene, origins, dirs, include_mirror=False)
    cap = _finish(scene, theta, noise, intrinsics, local, traced, pose, Frame.TILTED, 1.0)
    world = PointCloud(pose.transform_points(cap.cloud.points), Frame.WORLD, cap.cloud.via_mirror)
    return replace(cap, cloud=world, world_from_sensor=HomogeneousTransform.identity())
