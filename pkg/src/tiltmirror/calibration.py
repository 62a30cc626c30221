"""Mirror-displacement calibration with the robot arm as the target.

The arm pose is chosen greedily, joint by joint, to maximize the weighted
arm point count ``n_direct + w * n_reflect``.  The mirror transform is then
re-estimated by registering realized reflection points of the arm onto the
direct points.  Both the coarse hypotheses and the ICP updates stay inside
the three-parameter family of reflections, so the estimate is always a
valid mirror transform.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .geometry import (
    Frame,
    HomogeneousTransform,
    NotAReflectionError,
    Plane,
    PointCloud,
    householder_from_plane,
    plane_from_transform,
    rotation_angle,
)
from .pipeline import UnreachableTargetError, optimal_tilt_angle, to_world
from .scene import ArmModel, InvalidPoseError, SceneModel
from .sensor import CameraIntrinsics, NoiseModel, derive_seed, render

DEFAULT_WEIGHT = 2.0


class NoOverlapError(ValueError):
    """Too few gated correspondences between reflection and direct points."""


class CalibrationWarning(UserWarning):
    pass


def n_points(n_direct: float, n_reflect: float, w: float = DEFAULT_WEIGHT) -> float:
    """Weighted arm point count; reflection returns are up-weighted for their sparsity."""
    if n_direct < 0 or n_reflect < 0:
        raise ValueError("point counts must be non-negative")
    if w <= 0:
        raise ValueError("weight must be positive")
    return n_direct + w * n_reflect


def arm_point_counts(direct: PointCloud, reflect: PointCloud, scene: SceneModel) -> tuple[int, int]:
    """Points above the height threshold in each World-frame cloud (reflection already realized)."""
    for cloud in (direct, reflect):
        if cloud.frame != Frame.WORLD:
            raise ValueError(f"arm_point_counts needs World-frame clouds, got {cloud.frame.value}")
    thr = scene.height_threshold
    return int(np.sum(direct.points[:, 2] > thr)), int(np.sum(reflect.points[:, 2] > thr))


# ---------------------------------------------------------------------------
# capturing the arm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DepthView:
    """A depth image with its pose, for free-space checks of World points."""

    depth: np.ndarray  # (H, W) range along the ray, 0 = no return
    world_from_sensor: HomogeneousTransform
    intrinsics: CameraIntrinsics

    def free_space_violations(self, points: np.ndarray, margin: float = 0.02) -> np.ndarray:
        """Points the camera should have seen in front of every surface it measured around their pixel.

        The nearest range in the 3x3 neighborhood is used so points near
        depth edges are not flagged by pixel quantization.
        """
        intr = self.intrinsics
        local = self.world_from_sensor.inverse().transform_points(points)
        ahead = local[:, 2] < -1e-9
        with np.errstate(divide="ignore", invalid="ignore"):
            x = local[:, 0] / -local[:, 2]
            y = local[:, 1] / -local[:, 2]
        col = np.floor((x / math.tan(intr.horizontal_fov / 2) + 1) * intr.width / 2)
        row = np.floor((1 - y / math.tan(intr.vertical_fov / 2)) * intr.height / 2)
        inside = ahead & (col >= 0) & (col < intr.width) & (row >= 0) & (row < intr.height)
        measured = np.where(self.depth > 0, self.depth, np.inf)
        nearest = ndimage.minimum_filter(measured, size=3, mode="nearest")
        out = np.zeros(len(points), dtype=bool)
        r, c = row[inside].astype(int), col[inside].astype(int)
        out[inside] = np.linalg.norm(local[inside], axis=1) < nearest[r, c] - margin
        return out


@dataclass(frozen=True)
class ArmObservation:
    """Arm points from one direct + reflection capture pair."""

    direct: PointCloud  # World, real
    reflect_virtual: PointCloud  # World, virtual side (not realized)
    theta: float
    direct_view: Optional[DepthView] = None

    def counts(self) -> tuple[int, int]:
        return len(self.direct), len(self.reflect_virtual)


def dominant_plane(points: np.ndarray, tol: float = 0.01, iterations: int = 200, seed: int = 0) -> Plane:
    """RANSAC plane with the most points within ``tol``, refit to its inliers by PCA."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise ValueError("need at least three points for a plane")
    rng = np.random.default_rng(seed)
    best, best_count = None, -1
    for _ in range(iterations):
        a, b, c = pts[rng.choice(len(pts), 3, replace=False)]
        n = np.cross(b - a, c - a)
        length = np.linalg.norm(n)
        if length < 1e-9:
            continue
        n /= length
        count = int(np.sum(np.abs(pts @ n - n @ a) < tol))
        if count > best_count:
            best, best_count = (n, a), count
    if best is None:
        raise ValueError("points are collinear")
    n, a = best
    inl = pts[np.abs(pts @ n - n @ a) < tol]
    centroid = inl.mean(axis=0)
    normal = np.linalg.svd(inl - centroid, full_matrices=False)[2][2]
    return Plane.from_normal(normal, point=centroid)


def above_plane(points: np.ndarray, plane: Plane, viewpoint, height: float) -> np.ndarray:
    """Mask of points farther than ``height`` from ``plane`` on the viewpoint's side."""
    side = np.sign(plane.signed_distance(viewpoint)[0]) or 1.0
    return side * plane.signed_distance(points) > height


def arm_tilt(scene: SceneModel, arm: ArmModel, h_init: HomogeneousTransform) -> float:
    """Tilt aimed (through the mirror) at the centroid of the arm's joints."""
    return optimal_tilt_angle(scene.sensor, arm.joint_points().mean(axis=0), h_init)


def observe_arm(
    scene: SceneModel,
    noise: NoiseModel,
    intrinsics: CameraIntrinsics,
    h_init: HomogeneousTransform,
    theta: Optional[float] = None,
) -> ArmObservation:
    """Capture the scene directly and through the mirror; keep the points above the height threshold.

    Direct points are thresholded on World z.  Reflection points are kept
    unrealized and thresholded against the dominant plane of the virtual
    cloud (the mirrored ground), which does not depend on how well the
    mirror is known.
    """
    rig = scene.sensor
    if theta is None:
        theta = arm_tilt(scene, scene.arm, h_init)
    direct = render(scene, 0.0, noise.with_seed(derive_seed(noise.seed, 1)), intrinsics)
    reflect = render(scene, theta, noise.with_seed(derive_seed(noise.seed, 2)), intrinsics)
    thr = scene.height_threshold
    d = to_world(direct, rig, h_init)
    d = d.select(~d.via_mirror & (d.points[:, 2] > thr))
    virt = reflect.world_cloud()
    virt = virt.select(virt.via_mirror)
    if len(virt) >= 3:
        ground = dominant_plane(virt.points, seed=noise.seed)
        virt = virt.select(above_plane(virt.points, ground, rig.position, thr))
    return ArmObservation(d, virt, theta, DepthView(direct.depth_image, direct.world_from_sensor, intrinsics))


# ---------------------------------------------------------------------------
# Algorithm: calibration-optimal pose
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoseSearchSpace:
    joints: tuple[str, ...] = ("shoulder", "elbow")
    angle_grid: tuple[tuple[float, ...], ...] = (
        tuple(np.radians(np.linspace(0.0, 90.0, 10))),
        tuple(np.radians(np.arange(-90.0, 90.0, 18.0))),
    )

    def __post_init__(self):
        if len(self.joints) != len(self.angle_grid):
            raise ValueError("one angle grid per joint")
        if any(len(g) == 0 for g in self.angle_grid):
            raise ValueError("angle grids must be non-empty")
        for j in self.joints:
            if j not in ("shoulder", "elbow"):
                raise ValueError(f"unknown joint {j!r}")


@dataclass
class PoseSearchResult:
    pose: ArmModel
    n_points: float
    captures: int
    history: list[tuple[str, float, float]] = field(default_factory=list)  # (joint, angle, n_points)


def capture_counts(
    scene: SceneModel,
    noise: NoiseModel,
    intrinsics: CameraIntrinsics,
    h_init: HomogeneousTransform,
) -> tuple[int, int]:
    """Arm point counts of one direct + reflection capture pair, reflection realized by ``h_init``."""
    rig = scene.sensor
    theta = arm_tilt(scene, scene.arm, h_init)
    direct = render(scene, 0.0, noise.with_seed(derive_seed(noise.seed, 1)), intrinsics)
    reflect = render(scene, theta, noise.with_seed(derive_seed(noise.seed, 2)), intrinsics)
    d = to_world(direct, rig, h_init)
    r = to_world(reflect, rig, h_init)
    return arm_point_counts(d.select(~d.via_mirror), r.select(r.via_mirror), scene)


def pose_n_points(
    scene: SceneModel,
    arm: ArmModel,
    noise: NoiseModel,
    intrinsics: CameraIntrinsics,
    h_init: HomogeneousTransform,
    w: float = DEFAULT_WEIGHT,
) -> float:
    try:
        counts = capture_counts(scene.with_arm(arm), noise, intrinsics, h_init)
    except UnreachableTargetError:
        return 0.0
    return n_points(*counts, w)


def find_optimal_pose(
    scene: SceneModel,
    space: PoseSearchSpace = PoseSearchSpace(),
    noise: Optional[NoiseModel] = None,
    intrinsics: Optional[CameraIntrinsics] = None,
    *,
    w: float = DEFAULT_WEIGHT,
    h_init: Optional[HomogeneousTransform] = None,
) -> PoseSearchResult:
    """Greedy per-joint sweep: fix each joint in turn at the angle with the most weighted arm points.

    Every capture pair uses the same noise seed, so the count of a pose is
    reproducible.  Invalid poses (joint limits, links below ground) count as
    zero points.
    """
    if scene.arm is None:
        raise ValueError("scene has no arm to pose")
    noise = NoiseModel() if noise is None else noise
    intrinsics = CameraIntrinsics() if intrinsics is None else intrinsics
    h_init = householder_from_plane(scene.believed_mirror_plane()) if h_init is None else h_init
    pose = scene.arm
    captures = 0
    history = []
    best_overall = 0.0
    for joint, grid in zip(space.joints, space.angle_grid):
        maxpoints = 0.0
        best_angle = None
        for angle in grid:
            try:
                cand = pose.with_joints(**{joint: float(angle)})
            except InvalidPoseError:
                history.append((joint, float(angle), 0.0))
                continue
            n = pose_n_points(scene, cand, noise, intrinsics, h_init, w)
            captures += 1
            history.append((joint, float(angle), n))
            if n > maxpoints:
                best_angle, maxpoints = float(angle), n
        if best_angle is not None:
            pose = pose.with_joints(**{joint: best_angle})
            best_overall = maxpoints
    if best_overall == 0.0:
        warnings.warn("no arm points seen for any searched pose; keeping the initial pose", CalibrationWarning)
    return PoseSearchResult(pose, best_overall, captures, history)


# ---------------------------------------------------------------------------
# registration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegistrationParams:
    iterations: int = 512
    inlier_distance: float = 0.01
    gate: float = 0.05
    min_inlier_fraction: float = 0.3
    icp_tolerance: float = 1e-7
    icp_max_iter: int = 60
    voxel: float = 0.01
    search_radius: float = 0.4  # coarse correspondence radius around the prior
    max_normal_change: float = math.radians(10.0)
    max_offset_change: float = 0.15
    robust_scale: float = 0.003
    seed: int = 0


@dataclass(frozen=True)
class CalibrationResult:
    h_m_estimated: HomogeneousTransform
    plane_estimated: Plane
    converged: bool
    inlier_fraction: float
    translational_error: Optional[float] = None
    rotational_error: Optional[float] = None


def voxel_downsample(points: np.ndarray, voxel: float) -> np.ndarray:
    """Centroid of the points in each occupied voxel, ordered by voxel key (order-independent)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0 or voxel <= 0:
        return pts
    pts = pts[np.lexsort(pts.T[::-1])]  # fixed summation order
    keys = np.floor(pts / voxel).astype(np.int64)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inv, pts)
    return sums / np.bincount(inv)[:, None]


def reflect_points(normal: np.ndarray, d: float, points: np.ndarray) -> np.ndarray:
    return points - 2.0 * (points @ normal + d)[:, None] * normal


def surface_normals(points: np.ndarray, k: int = 10) -> np.ndarray:
    """Unit normals from the smallest principal direction of each point's k neighbors."""
    k = min(k, len(points))
    _, idx = cKDTree(points).query(points, k=k)
    nb = points[idx] - points[idx].mean(axis=1, keepdims=True)
    _, vecs = np.linalg.eigh(np.einsum("nki,nkj->nij", nb, nb))
    return vecs[:, :, 0]


def _tangent_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def reflection_hypotheses(
    virtual: np.ndarray, real: np.ndarray, prior: Plane, params: RegistrationParams
) -> tuple[np.ndarray, np.ndarray]:
    """Mirror planes implied by single virtual/real point pairs near the prior.

    A reflection maps ``v`` to ``p`` only if the plane bisects them: the
    normal is parallel to ``v - p`` and the midpoint lies on the plane.
    Pairs are proposed wherever ``p`` lies within the search radius of the
    prior-realized ``v``; planes far from the prior are discarded.
    """
    n0, d0 = prior.normal, prior.d
    tree = cKDTree(real)
    near = tree.query_ball_point(reflect_points(n0, d0, virtual), params.search_radius)
    vi = np.repeat(np.arange(len(virtual)), [len(x) for x in near])
    pj = np.fromiter((j for x in near for j in x), dtype=int, count=len(vi))
    diff = virtual[vi] - real[pj]
    length = np.linalg.norm(diff, axis=1)
    ok = length > 1e-6
    n = diff[ok] / length[ok, None]
    n *= np.sign(n @ n0)[:, None]
    d = -np.einsum("ij,ij->i", n, (virtual[vi[ok]] + real[pj[ok]]) / 2)
    keep = (n @ n0 > math.cos(params.max_normal_change)) & (np.abs(d - d0) < params.max_offset_change)
    return n[keep], d[keep]


def _candidate_order(n_hyp, d_hyp, prior: Plane, params: RegistrationParams) -> np.ndarray:
    """Hypotheses to score: one per densest vote bin first, then random draws.

    Pairs that truly correspond all imply nearly the same plane, while wrong
    pairs scatter, so bins in (tilt, offset) space with many votes are
    tried before the random remainder.  At most ``params.iterations``.
    """
    if len(n_hyp) == 0:
        return np.empty(0, dtype=int)
    e1, e2 = _tangent_basis(prior.normal)
    ang = np.radians(0.5)
    keys = np.stack(
        [np.floor(n_hyp @ e1 / ang), np.floor(n_hyp @ e2 / ang), np.floor((d_hyp - prior.d) / 0.01)], axis=1
    ).astype(np.int64)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    n_top = min(params.iterations // 2, len(counts))
    top_bins = np.argsort(-counts, kind="stable")[:n_top]
    first = np.full(len(counts), -1)
    first[inv[::-1]] = np.arange(len(inv))[::-1]  # lowest hypothesis index in each bin
    voted = first[top_bins]
    rng = np.random.default_rng(params.seed)
    rest = np.setdiff1d(np.arange(len(n_hyp)), voted)
    extra = rng.choice(rest, size=min(params.iterations - len(voted), len(rest)), replace=False)
    return np.concatenate([voted, np.sort(extra)])


def _inlier_fraction(virtual, tree, n, d, eps) -> float:
    dist, _ = tree.query(reflect_points(n, d, virtual), distance_upper_bound=eps)
    return float(np.isfinite(dist).mean())


def _consistency(virtual, tree, n, d, eps, view: Optional[DepthView]) -> float:
    """Inlier fraction, minus the fraction of realized points lying in observed free space."""
    score = _inlier_fraction(virtual, tree, n, d, eps)
    if view is not None:
        score -= float(view.free_space_violations(reflect_points(n, d, virtual)).mean())
    return score


def _reflection_step(v, p, m, n, d, scale):
    """One robust Gauss-Newton step on point-to-plane residuals over (normal, offset)."""
    q = reflect_points(n, d, v)
    r = np.einsum("ij,ij->i", q - p, m)
    e1, e2 = _tangent_basis(n)
    s = v @ n + d
    mn = m @ n
    jac = np.stack([-2.0 * ((v @ e1) * mn + s * (m @ e1)), -2.0 * ((v @ e2) * mn + s * (m @ e2)), -2.0 * mn], axis=1)
    wts = 1.0 / np.sqrt(1.0 + (r / scale) ** 2)
    jw = jac * wts[:, None]
    step = np.linalg.lstsq(jw.T @ jac, -jw.T @ r, rcond=None)[0]
    n_new = n + step[0] * e1 + step[1] * e2
    n_new /= np.linalg.norm(n_new)
    d_new = d + step[2]
    return n_new, d_new, float(np.linalg.norm(n_new - n) + abs(d_new - d))


def refine_reflection(
    virtual: np.ndarray,
    real: np.ndarray,
    n: np.ndarray,
    d: float,
    params: RegistrationParams,
) -> tuple[np.ndarray, float, bool]:
    """ICP over the three-parameter family of reflections (point-to-plane, robust weights).

    The gate shrinks from ``params.gate`` to the inlier distance.  When the
    nearest-neighbor assignment repeats (a fixed point or a short cycle), the
    assignment is frozen and the robust fit is iterated to its minimum.
    Returns the refined normal, offset, and whether the final gate reached
    the step tolerance.
    """
    tree = cKDTree(real)
    normals = surface_normals(real)
    gates = np.geomspace(params.gate, max(params.inlier_distance, 1e-4), 4)
    settled = False
    for gate in gates:
        settled = False
        seen = set()
        frozen = None
        for _ in range(params.icp_max_iter):
            if frozen is None:
                dist, idx = tree.query(reflect_points(n, d, virtual), distance_upper_bound=gate)
                ok = np.isfinite(dist)
                if ok.sum() < 3:
                    raise NoOverlapError(f"only {int(ok.sum())} correspondences inside the {gate:.3f} m gate")
                key = np.where(ok, idx, -1).tobytes()
                pairs = (virtual[ok], real[idx[ok]], normals[idx[ok]])
                if key in seen:
                    frozen = pairs
                seen.add(key)
            n, d, change = _reflection_step(*(frozen or pairs), n, d, params.robust_scale)
            if change < params.icp_tolerance:
                settled = True
                break
    return n, float(d), settled


def register(
    reflect_virtual: PointCloud,
    direct: PointCloud,
    h_init: HomogeneousTransform,
    params: RegistrationParams = RegistrationParams(),
    h_true: Optional[HomogeneousTransform] = None,
    direct_view: Optional[DepthView] = None,
) -> CalibrationResult:
    """Estimate the mirror transform that maps virtual reflection points onto direct points.

    Coarse stage: RANSAC over single-pair reflection hypotheses, scored by
    the fraction of realized points within the inlier distance.  With a
    ``direct_view``, realized points that the direct camera would have seen
    in front of its measurements count against a hypothesis.  Fine stage:
    reflection-constrained ICP.  The estimate is a pure reflection by
    construction.
    """
    v = voxel_downsample(reflect_virtual.points, params.voxel)
    p = voxel_downsample(direct.points, params.voxel)
    if len(v) < 3 or len(p) < 3:
        raise NoOverlapError("not enough points to register")
    prior = plane_from_transform(h_init)
    tree = cKDTree(p)
    dist, _ = tree.query(h_init.transform_points(v), distance_upper_bound=params.search_radius)
    if np.isfinite(dist).sum() < 3:
        raise NoOverlapError("reflection and direct points do not overlap near the prior mirror")

    n_hyp, d_hyp = reflection_hypotheses(v, p, prior, params)
    best_n, best_d = prior.normal, prior.d
    best_score = _consistency(v, tree, best_n, best_d, params.inlier_distance, direct_view)
    for k in _candidate_order(n_hyp, d_hyp, prior, params):
        score = _consistency(v, tree, n_hyp[k], d_hyp[k], params.inlier_distance, direct_view)
        if score > best_score:
            best_n, best_d, best_score = n_hyp[k], float(d_hyp[k]), score

    n, d, settled = refine_reflection(v, p, best_n, best_d, params)
    plane = Plane.from_normal(n, d).canonical()
    h_est = householder_from_plane(plane)
    fraction = _inlier_fraction(v, tree, plane.normal, plane.d, params.inlier_distance)
    te = re = None
    if h_true is not None:
        te, re = calib_error(h_est, h_true)
    return CalibrationResult(
        h_m_estimated=h_est,
        plane_estimated=plane,
        converged=settled and fraction >= params.min_inlier_fraction,
        inlier_fraction=fraction,
        translational_error=te,
        rotational_error=re,
    )


def calib_error(h_est: HomogeneousTransform, h_true: HomogeneousTransform) -> tuple[float, float]:
    """Translation (m) and rotation angle (deg) of the rigid motion ``h_est @ h_true^-1``."""
    for h in (h_est, h_true):
        if h.kind != "improper":
            raise NotAReflectionError("calib_error expects two reflections")
    delta = h_est @ h_true.inverse()
    return float(np.linalg.norm(delta.t)), math.degrees(rotation_angle(delta.rotation))


def calibrate_scene(
    scene: SceneModel,
    noise: Optional[NoiseModel] = None,
    intrinsics: Optional[CameraIntrinsics] = None,
    params: RegistrationParams = RegistrationParams(),
    space: PoseSearchSpace = PoseSearchSpace(),
    pose: Optional[ArmModel] = None,
) -> tuple[ArmModel, CalibrationResult]:
    """Estimate the scene's actual mirror from the plane perception currently believes.

    Without ``pose`` the arm is first moved to the searched optimal pose.
    The error fields are filled against the scene's true mirror.
    """
    if scene.arm is None:
        raise ValueError("calibration needs a scene with an arm")
    noise = NoiseModel() if noise is None else noise
    intrinsics = CameraIntrinsics() if intrinsics is None else intrinsics
    h_init = householder_from_plane(scene.believed_mirror_plane())
    if pose is None:
        pose = find_optimal_pose(scene, space, noise, intrinsics, h_init=h_init).pose
    obs = observe_arm(scene.with_arm(pose), noise, intrinsics, h_init)
    h_true = householder_from_plane(scene.mirror.plane)
    return pose, register(obs.reflect_virtual, obs.direct, h_init, params, h_true, obs.direct_view)


# ---------------------------------------------------------------------------
# perturbation sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    angle_deg: float
    run: int
    translational_error: float
    rotational_error: float
    converged: bool
    inlier_fraction: float
    n_direct: int
    n_reflect: int

    CSV_FIELDS = (
        "angle_deg", "run", "translational_error_m", "rotational_error_deg",
        "converged", "inlier_fraction", "n_direct", "n_reflect",
    )

    def csv_row(self) -> list[str]:
        return [
            f"{self.angle_deg:.3f}", str(self.run), f"{self.translational_error:.6f}",
            f"{self.rotational_error:.6f}", str(int(self.converged)), f"{self.inlier_fraction:.4f}",
            str(self.n_direct), str(self.n_reflect),
        ]


def random_pose(arm: ArmModel, seed: int, attempts: int = 100) -> ArmModel:
    """Uniform joint angles within limits, redrawn until the arm stays above ground."""
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        angles = [rng.uniform(lo, hi) for lo, hi in arm.joint_limits]
        try:
            return arm.with_joints(shoulder=angles[0], elbow=angles[1])
        except InvalidPoseError:
            continue
    raise InvalidPoseError(f"no valid random pose after {attempts} draws")


def calibration_sweep(
    scene: SceneModel,
    angles_deg: Sequence[float],
    pose: Union[str, ArmModel] = "optimal",
    runs: int = 10,
    noise: Optional[NoiseModel] = None,
    intrinsics: Optional[CameraIntrinsics] = None,
    params: RegistrationParams = RegistrationParams(),
    space: PoseSearchSpace = PoseSearchSpace(),
) -> list[SweepRow]:
    """Tilt the mirror by each angle, then estimate it from the nominal prior ``runs`` times.

    ``pose`` is ``"optimal"`` (greedy search, once, with the mirror at its
    nominal place), ``"random"`` or a fixed ``ArmModel``.  A run whose
    registration fails is recorded as not converged with infinite error.
    """
    if scene.arm is None:
        raise ValueError("calibration needs a scene with an arm")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if any(abs(a) > 10.0 for a in angles_deg):
        raise ValueError("sweep angles must lie within +-10 degrees")
    noise = NoiseModel() if noise is None else noise
    intrinsics = CameraIntrinsics() if intrinsics is None else intrinsics
    nominal = scene.mirror.plane
    h_init = householder_from_plane(nominal)
    if isinstance(pose, ArmModel):
        arm = pose
    elif pose == "optimal":
        arm = find_optimal_pose(scene, space, noise, intrinsics, h_init=h_init).pose
    elif pose == "random":
        arm = random_pose(scene.arm, derive_seed(noise.seed, 9))
    else:
        raise ValueError(f"unknown pose mode {pose!r}")
    rows = []
    for ai, angle in enumerate(angles_deg):
        true_mirror = scene.mirror.tilted(math.radians(angle))
        posed = replace(scene.with_mirror(true_mirror), calibrated_plane=nominal).with_arm(arm)
        h_true = householder_from_plane(true_mirror.plane)
        for run in range(runs):
            run_noise = noise.with_seed(derive_seed(noise.seed, ai, run))
            obs = observe_arm(posed, run_noise, intrinsics, h_init)
            try:
                res = register(obs.reflect_virtual, obs.direct, h_init, replace(params, seed=run), h_true, obs.direct_view)
                row = SweepRow(angle, run, res.translational_error, res.rotational_error, res.converged,
                               res.inlier_fraction, *obs.counts())
            except (NoOverlapError, NotAReflectionError):
                row = SweepRow(angle, run, math.inf, math.inf, False, 0.0, *obs.counts())
            rows.append(row)
    return rows


SUMMARY_FIELDS = ("angle_deg", "mean_trans_m", "mean_rot_deg", "converged_fraction")


def summary_csv_rows(rows: Sequence[SweepRow]) -> list[list[str]]:
    """One fixed-precision row per angle: angle, mean errors, converged fraction."""
    return [
        [f"{a:.3f}", f"{s['translational_error']:.6f}", f"{s['rotational_error']:.6f}", f"{s['converged']:.3f}"]
        for a, s in sweep_summary(rows).items()
    ]


def sweep_summary(rows: Sequence[SweepRow]) -> dict[float, dict[str, float]]:
    """Per-angle mean errors and convergence rate."""
    out = {}
    for angle in sorted({r.angle_deg for r in rows}):
        sel = [r for r in rows if r.angle_deg == angle]
        out[angle] = {
            "translational_error": float(np.mean([r.translational_error for r in sel])),
            "rotational_error": float(np.mean([r.rotational_error for r in sel])),
            "converged": float(np.mean([r.converged for r in sel])),
        }
    return out


# ---------------------------------------------------------------------------
# pose quality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoseQuality:
    label: str
    pose: ArmModel
    n_points: float
    translational_error: float
    rotational_error: float
    converged: float


def pose_quality_study(
    scene: SceneModel,
    angles_deg: Sequence[float] = (-4.0, -2.0, 2.0, 4.0),
    n_random: int = 5,
    candidates: int = 40,
    runs: int = 5,
    noise: Optional[NoiseModel] = None,
    intrinsics: Optional[CameraIntrinsics] = None,
    params: RegistrationParams = RegistrationParams(),
    space: PoseSearchSpace = PoseSearchSpace(),
) -> list[PoseQuality]:
    """Calibration error of random poses versus the searched optimal pose.

    Poses are scored with the mirror at its nominal place.  ``candidates``
    random valid poses are scored by ``n_points``; ``n_random`` of those
    below the optimum are kept at evenly spaced ranks.  Each pose is then
    calibrated ``runs`` times per mirror tilt in ``angles_deg`` and its
    errors averaged.  Results are sorted by ``n_points``; the optimal pose
    is labelled ``optimal``.
    """
    if scene.arm is None:
        raise ValueError("pose study needs a scene with an arm")
    noise = NoiseModel() if noise is None else noise
    intrinsics = CameraIntrinsics() if intrinsics is None else intrinsics
    h_init = householder_from_plane(scene.mirror.plane)

    best = find_optimal_pose(scene, space, noise, intrinsics, h_init=h_init)
    pool = []
    for i in range(candidates):
        arm = random_pose(scene.arm, derive_seed(noise.seed, 7, i))
        n = pose_n_points(scene, arm, noise, intrinsics, h_init)
        if n < best.n_points:
            pool.append((n, i, arm))
    if len(pool) < n_random:
        raise ValueError(f"only {len(pool)} random poses fall below the optimum")
    pool.sort(key=lambda x: (x[0], x[1]))
    ranks = np.linspace(0, len(pool) - 1, n_random).round().astype(int)
    chosen = [(f"random-{k}", pool[r][2], pool[r][0]) for k, r in enumerate(ranks)]
    chosen.append(("optimal", best.pose, best.n_points))

    out = []
    for label, arm, n in chosen:
        rows = calibration_sweep(scene, angles_deg, arm, runs, noise.with_seed(derive_seed(noise.seed, 8)),
                                 intrinsics, params)
        out.append(PoseQuality(
            label, arm, n,
            float(np.mean([r.translational_error for r in rows])),
            float(np.mean([r.rotational_error for r in rows])),
            float(np.mean([r.converged for r in rows])),
        ))
    out.sort(key=lambda q: q.n_points)
    return out
