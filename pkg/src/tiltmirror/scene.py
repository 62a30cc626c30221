"""Declarative workcell model: ground, boxes, a two-link arm, the mirror and the sensor rig."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from .geometry import Plane, SensorRig

DEFAULT_SENSOR_HEIGHT = 2.1
DEFAULT_MIRROR_OFFSET = 1.2
DEFAULT_REFLECTANCE = 0.9
THRESHOLD_MARGIN = 0.05
DEFAULT_JOINT_LIMITS = ((-math.pi / 2, math.pi / 2), (-math.pi / 2, math.pi / 2))

# sampling region for generated boxes (box footprints stay inside)
WORKSPACE_X = (-0.65, 0.8)
WORKSPACE_Y = (-0.5, 0.5)


class SceneError(Exception):
    pass


class ConfigError(SceneError):
    """Missing or malformed field in a scene document."""


class ValidationError(SceneError, ValueError):
    """A scene value violates a type invariant."""


class InvalidPoseError(ValidationError):
    """Arm configuration leaves joint limits or puts a link below ground."""


class GenerationError(SceneError):
    """Random scene placement failed after bounded retries."""


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        size = tuple(float(v) for v in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ValidationError("box center and size need three components")
        if min(size) <= 0:
            raise ValidationError(f"box size must be positive, got {size}")
        if center[2] - size[2] / 2 < -1e-9:
            raise ValidationError("box must rest on or above the ground")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", float(self.yaw))

    @property
    def rotation(self) -> np.ndarray:
        return _yaw_matrix(self.yaw)

    @property
    def half_extents(self) -> np.ndarray:
        return np.asarray(self.size) / 2

    @property
    def top(self) -> float:
        return self.center[2] + self.size[2] / 2

    def footprint(self) -> np.ndarray:
        """Ground-plane corners (4, 2), counter-clockwise."""
        hw, hd = self.size[0] / 2, self.size[1] / 2
        local = np.array([[-hw, -hd], [hw, -hd], [hw, hd], [-hw, hd]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center[:2])

    def distance(self, points) -> np.ndarray:
        """Unsigned distance from points to the solid box (0 inside)."""
        p = (np.asarray(points, dtype=float).reshape(-1, 3) - self.center) @ self.rotation
        q = np.abs(p) - self.half_extents
        return np.linalg.norm(np.maximum(q, 0.0), axis=1)


@dataclass(frozen=True)
class Capsule:
    p0: np.ndarray
    p1: np.ndarray
    radius: float


@dataclass(frozen=True)
class ArmModel:
    """Yaw base + shoulder + elbow arm made of two capsules.

    Joint angles are measured in the vertical plane through the base along
    ``base_yaw``: shoulder from the horizontal, elbow as the downward bend of
    the forearm relative to the upper link.
    """

    base: tuple[float, float] = (0.0, -0.8)
    base_yaw: float = math.pi / 2
    link_lengths: tuple[float, float] = (0.75, 0.7)
    link_radius: float = 0.045
    joint_angles: tuple[float, float] = (0.0, 0.0)
    joint_limits: tuple[tuple[float, float], tuple[float, float]] = DEFAULT_JOINT_LIMITS

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        object.__setattr__(self, "joint_angles", tuple(float(v) for v in self.joint_angles))
        object.__setattr__(self, "joint_limits", tuple(tuple(float(v) for v in lim) for lim in self.joint_limits))
        object.__setattr__(self, "base_yaw", float(self.base_yaw))
        object.__setattr__(self, "link_radius", float(self.link_radius))
        if len(self.base) != 2 or len(self.link_lengths) != 2 or len(self.joint_angles) != 2:
            raise ValidationError("arm base, link_lengths and joint_angles need two components")
        if min(self.link_lengths) <= 0:
            raise ValidationError("link lengths must be positive")
        if self.link_radius <= 0:
            raise ValidationError("link radius must be positive")
        for name, angle, (lo, hi) in zip(("shoulder", "elbow"), self.joint_angles, self.joint_limits):
            if not lo - 1e-12 <= angle <= hi + 1e-12:
                raise InvalidPoseError(f"{name} angle {angle:.4f} outside limits [{lo:.4f}, {hi:.4f}]")
        arm_capsules(self)

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.base_yaw), math.sin(self.base_yaw), 0.0])

    def with_joints(self, shoulder: float | None = None, elbow: float | None = None) -> "ArmModel":
        s, e = self.joint_angles
        return replace(self, joint_angles=(s if shoulder is None else shoulder, e if elbow is None else elbow))

    def joint_points(self) -> np.ndarray:
        """Shoulder, elbow and wrist positions (3, 3)."""
        shoulder, elbow = self.joint_angles
        upper, fore = self.link_lengths
        h = self.heading
        up = np.array([0.0, 0.0, 1.0])
        p0 = np.array([self.base[0], self.base[1], 0.0])
        p1 = p0 + upper * (math.cos(shoulder) * h + math.sin(shoulder) * up)
        fa = shoulder - elbow
        p2 = p1 + fore * (math.cos(fa) * h + math.sin(fa) * up)
        return np.stack([p0, p1, p2])


def arm_capsules(arm: ArmModel) -> list[Capsule]:
    """Upper-arm and forearm capsules from planar forward kinematics."""
    pts = arm.joint_points()
    if np.min(pts[:, 2]) < -1e-9:
        raise InvalidPoseError(
            f"pose {tuple(round(a, 4) for a in arm.joint_angles)} puts a link below ground"
        )
    return [Capsule(pts[0], pts[1], arm.link_radius), Capsule(pts[1], pts[2], arm.link_radius)]


@dataclass(frozen=True)
class MirrorPatch:
    """Rectangular planar mirror.  ``plane``'s normal points out of the reflective face."""

    plane: Plane
    center: tuple[float, float, float]
    width: float = 1.6
    height: float = 1.6
    reflectance: float = DEFAULT_REFLECTANCE

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        object.__setattr__(self, "center", center)
        if abs(float(self.plane.signed_distance(center)[0])) > 1e-9:
            raise ValidationError("mirror center does not lie on the mirror plane")
        if not 0 < self.reflectance <= 1:
            raise ValidationError(f"mirror reflectance {self.reflectance} outside (0, 1]")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("mirror width and height must be positive")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """In-plane (horizontal, up) unit axes; width runs along the first."""
        n = self.plane.normal
        u = np.cross([0.0, 0.0, 1.0], n)
        if np.linalg.norm(u) < 1e-9:
            u = np.array([1.0, 0.0, 0.0])
        u = u / np.linalg.norm(u)
        v = np.cross(n, u)
        return u, v

    def tilted(self, angle: float) -> "MirrorPatch":
        """Mirror rotated by ``angle`` (rad) about its horizontal in-plane axis through the center."""
        from .geometry import rotation_about_axis

        u, _ = self.axes()
        n = rotation_about_axis(u, angle) @ self.plane.normal
        return replace(self, plane=Plane.from_normal(n, point=self.center))


@dataclass(frozen=True)
class SceneModel:
    boxes: tuple[Box, ...]
    mirror: MirrorPatch
    sensor: SensorRig = field(default_factory=SensorRig)
    arm: Optional[ArmModel] = None
    height_threshold: Optional[float] = None
    expected_robots: int = 1
    expected_object_height: float = 0.15
    fixtures: tuple[Box, ...] = ()
    arm_target: Optional[int] = None
    calibrated_plane: Optional[Plane] = None
    scene_id: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "fixtures", tuple(self.fixtures))
        tallest = max((b.top for b in self.boxes), default=0.0)
        if self.height_threshold is None:
            object.__setattr__(self, "height_threshold", tallest + THRESHOLD_MARGIN)
        if self.height_threshold <= tallest:
            raise ValidationError(
                f"height_threshold {self.height_threshold} must exceed the tallest box ({tallest})"
            )
        if self.expected_robots < 1:
            raise ValidationError("expected_robots must be >= 1")
        if self.expected_object_height <= 0:
            raise ValidationError("expected_object_height must be positive")
        if self.arm_target is not None and not 0 <= self.arm_target < len(self.boxes):
            raise ValidationError(f"arm_target {self.arm_target} does not index a box")
        if self.mirror.plane.signed_distance(self.sensor.position)[0] <= 0:
            raise ValidationError("sensor must be on the reflective side of the mirror")

    @property
    def ground(self) -> Plane:
        return Plane(0.0, 0.0, 1.0, 0.0)

    def without_arm(self) -> "SceneModel":
        return replace(self, arm=None, arm_target=None)

    def with_arm(self, arm: Optional[ArmModel]) -> "SceneModel":
        return replace(self, arm=arm)

    def with_mirror(self, mirror: MirrorPatch) -> "SceneModel":
        return replace(self, mirror=mirror)

    def believed_mirror_plane(self) -> Plane:
        """Mirror plane the perception stack assumes (calibrated estimate if stored)."""
        return self.calibrated_plane if self.calibrated_plane is not None else self.mirror.plane


def default_mirror(sensor: SensorRig) -> MirrorPatch:
    x = sensor.position[0] + DEFAULT_MIRROR_OFFSET
    return MirrorPatch(
        plane=Plane(-1.0, 0.0, 0.0, x),
        center=(x, sensor.position[1], 1.0),
    )


# ---------------------------------------------------------------------------
# configuration documents (JSON)
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "id", "sensor", "mirror", "boxes", "fixtures", "arm", "arm_target", "height_threshold",
    "expected_robots", "expected_object_height", "calibrated_plane", "camera", "noise",
}


def _req(d: dict, key: str, path: str) -> Any:
    if not isinstance(d, dict):
        raise ConfigError(f"{path or 'document'}: expected an object")
    if key not in d:
        raise ConfigError(f"missing field '{path + '.' if path else ''}{key}'")
    return d[key]


def _vec(value, n: int, path: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{path}' must be a list of numbers") from None
    if len(out) != n:
        raise ConfigError(f"field '{path}' must have {n} components, got {len(out)}")
    return out


def _num(value, path: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{path}' must be a number") from None


def _box_from(d: dict, path: str) -> Box:
    size = _vec(_req(d, "size", path), 3, f"{path}.size")
    raw = _req(d, "center", path)
    center = _vec(raw, len(raw) if isinstance(raw, list) and len(raw) == 2 else 3, f"{path}.center")
    if len(center) == 2:
        center = (*center, size[2] / 2)
    return Box(center, size, _num(d.get("yaw", 0.0), f"{path}.yaw"))


def _box_to(b: Box) -> dict:
    return {"center": list(b.center), "size": list(b.size), "yaw": b.yaw}


def _plane_from(value, path: str) -> Plane:
    a, b, c, d = _vec(value, 4, path)
    try:
        return Plane.from_normal((a, b, c), d)
    except ValueError as exc:
        raise ConfigError(f"field '{path}': {exc}") from None


def scene_from_dict(doc: dict) -> SceneModel:
    if not isinstance(doc, dict):
        raise ConfigError("scene document must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")

    s = doc.get("sensor") or {}
    sensor = SensorRig(
        position=_vec(s.get("position", (0.0, 0.0, DEFAULT_SENSOR_HEIGHT)), 3, "sensor.position"),
        tilt_radius=_num(s.get("tilt_radius", 0.05), "sensor.tilt_radius"),
    )

    boxes_raw = _req(doc, "boxes", "")
    if not isinstance(boxes_raw, list):
        raise ConfigError("field 'boxes' must be a list")
    boxes = [_box_from(b, f"boxes[{i}]") for i, b in enumerate(boxes_raw)]
    fixtures = [_box_from(b, f"fixtures[{i}]") for i, b in enumerate(doc.get("fixtures") or [])]

    m = doc.get("mirror")
    if m is None:
        mirror = default_mirror(sensor)
    else:
        plane = _plane_from(_req(m, "plane", "mirror"), "mirror.plane")
        mirror = MirrorPatch(
            plane=plane,
            center=_vec(_req(m, "center", "mirror"), 3, "mirror.center"),
            width=_num(m.get("width", 1.6), "mirror.width"),
            height=_num(m.get("height", 1.6), "mirror.height"),
            reflectance=_num(m.get("reflectance", DEFAULT_REFLECTANCE), "mirror.reflectance"),
        )

    arm = None
    a = doc.get("arm")
    if a is not None:
        limits = a.get("joint_limits", DEFAULT_JOINT_LIMITS)
        arm = ArmModel(
            base=_vec(_req(a, "base", "arm"), 2, "arm.base"),
            base_yaw=_num(a.get("base_yaw", 0.0), "arm.base_yaw"),
            link_lengths=_vec(a.get("link_lengths", (0.75, 0.7)), 2, "arm.link_lengths"),
            link_radius=_num(a.get("link_radius", 0.045), "arm.link_radius"),
            joint_angles=_vec(a.get("joint_angles", (0.0, 0.0)), 2, "arm.joint_angles"),
            joint_limits=(_vec(limits[0], 2, "arm.joint_limits[0]"), _vec(limits[1], 2, "arm.joint_limits[1]")),
        )

    cal = doc.get("calibrated_plane")
    return SceneModel(
        boxes=boxes,
        mirror=mirror,
        sensor=sensor,
        arm=arm,
        height_threshold=None if doc.get("height_threshold") is None else _num(doc["height_threshold"], "height_threshold"),
        expected_robots=int(doc.get("expected_robots", 1)),
        expected_object_height=_num(doc.get("expected_object_height", 0.15), "expected_object_height"),
        fixtures=fixtures,
        arm_target=None if doc.get("arm_target") is None else int(doc["arm_target"]),
        calibrated_plane=None if cal is None else _plane_from(cal, "calibrated_plane"),
        scene_id=str(doc.get("id", "scene")),
    )


def scene_from_config(text: str) -> SceneModel:
    """Parse and validate a JSON scene document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scene document is not valid JSON: {exc}") from None
    try:
        return scene_from_dict(doc)
    except (TypeError, IndexError, AttributeError) as exc:
        raise ConfigError(f"malformed scene document: {exc}") from None


def scene_to_dict(scene: SceneModel) -> dict:
    doc: dict[str, Any] = {
        "id": scene.scene_id,
        "sensor": {"position": list(scene.sensor.position), "tilt_radius": scene.sensor.tilt_radius},
        "mirror": {
            "plane": list(scene.mirror.plane.as_tuple()),
            "center": list(scene.mirror.center),
            "width": scene.mirror.width,
            "height": scene.mirror.height,
            "reflectance": scene.mirror.reflectance,
        },
        "boxes": [_box_to(b) for b in scene.boxes],
        "fixtures": [_box_to(b) for b in scene.fixtures],
        "arm": None,
        "arm_target": scene.arm_target,
        "height_threshold": scene.height_threshold,
        "expected_robots": scene.expected_robots,
        "expected_object_height": scene.expected_object_height,
        "calibrated_plane": None if scene.calibrated_plane is None else list(scene.calibrated_plane.as_tuple()),
    }
    if scene.arm is not None:
        a = scene.arm
        doc["arm"] = {
            "base": list(a.base),
            "base_yaw": a.base_yaw,
            "link_lengths": list(a.link_lengths),
            "link_radius": a.link_radius,
            "joint_angles": list(a.joint_angles),
            "joint_limits": [list(l) for l in a.joint_limits],
        }
    return doc


def scene_to_config(scene: SceneModel, extra: Optional[dict] = None) -> str:
    doc = scene_to_dict(scene)
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# random scenes
# ---------------------------------------------------------------------------


def footprints_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons given as (k, 2) vertex arrays."""
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        for ex, ey in edges:
            axis = np.array([-ey, ex])
            pa, pb = a @ axis, b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def _grown(box: Box, margin: float) -> Box:
    w, d, h = box.size
    return replace(box, size=(w + 2 * margin, d + 2 * margin, h))


def _capsule_clearance(caps: Sequence[Capsule], boxes: Sequence[Box]) -> float:
    best = math.inf
    for cap in caps:
        s = np.linspace(0.0, 1.0, 60)[:, None]
        pts = cap.p0 + s * (cap.p1 - cap.p0)
        for b in boxes:
            best = min(best, float(b.distance(pts).min()) - cap.radius)
    return best


def _place_boxes(rng: np.random.Generator, n: int, margin: float) -> list[Box]:
    boxes: list[Box] = []
    for _ in range(400 * n):
        if len(boxes) == n:
            break
        w, d = rng.uniform(0.18, 0.34, size=2)
        h = rng.uniform(0.10, 0.30)
        yaw = rng.uniform(-math.pi / 4, math.pi / 4)
        reach = 0.5 * math.hypot(w, d)
        x = rng.uniform(WORKSPACE_X[0] + reach, WORKSPACE_X[1] - reach)
        y = rng.uniform(WORKSPACE_Y[0] + reach, WORKSPACE_Y[1] - reach)
        cand = Box((x, y, h / 2), (w, d, h), yaw)
        fp = _grown(cand, margin / 2).footprint()
        if all(not footprints_overlap(fp, _grown(b, margin / 2).footprint()) for b in boxes):
            boxes.append(cand)
    if len(boxes) < n:
        raise GenerationError(f"could not place {n} non-overlapping boxes")
    return boxes


def _arm_over(
    rng: np.random.Generator, target: Box, boxes: Sequence[Box], sensor: SensorRig, mirror_x: float
) -> Optional[ArmModel]:
    """Arm whose horizontal forearm shadows ``target`` as seen from the zenith sensor."""
    upper, fore = 0.75, 0.7
    side = rng.choice([-1.0, 1.0])
    yaw = side * math.pi / 2 + rng.uniform(-0.35, 0.35)
    shoulder = rng.uniform(math.radians(60), math.radians(80))
    overshoot = rng.uniform(0.2, 0.35)
    lateral = rng.uniform(-0.04, 0.04)
    # forearm point whose central projection from the sensor lands on the box-top center
    arm_height = upper * math.sin(shoulder)
    sx, sy, sz = sensor.position
    k = (sz - arm_height) / (sz - target.top)
    aim = np.array([sx, sy]) + k * (np.asarray(target.center[:2]) - [sx, sy])
    reach = upper * math.cos(shoulder) + fore - overshoot
    heading = np.array([math.cos(yaw), math.sin(yaw)])
    normal = np.array([-heading[1], heading[0]])
    base = aim - reach * heading + lateral * normal
    try:
        arm = ArmModel(base=tuple(base), base_yaw=yaw, link_lengths=(upper, fore), joint_angles=(shoulder, shoulder))
    except InvalidPoseError:
        return None
    caps = arm_capsules(arm)
    if _capsule_clearance(caps, boxes) < 0.03:
        return None
    if np.max(arm.joint_points()[:, 0]) + arm.link_radius > mirror_x - 0.1:
        return None
    return arm


def calibration_scene() -> SceneModel:
    """Reference workcell for calibration runs: one box and an arm beside it, clear of the mirror."""
    sensor = SensorRig()
    return SceneModel(
        boxes=[Box((-0.3, 0.3, 0.1), (0.25, 0.25, 0.2))],
        mirror=default_mirror(sensor),
        sensor=sensor,
        arm=ArmModel(base=(0.3, -0.7), base_yaw=math.pi / 2),
        scene_id="calibration",
    )


def randomized_scene(seed: int, difficulty: str = "easy", *, with_arm: bool = True) -> SceneModel:
    """Deterministic random workcell: easy = 1-3 boxes, hard = 4-6, arm posed over one box."""
    if difficulty not in ("easy", "hard"):
        raise ValueError(f"difficulty must be 'easy' or 'hard', got {difficulty!r}")
    rng = np.random.default_rng(seed)
    lo, hi = (1, 3) if difficulty == "easy" else (4, 6)
    n = int(rng.integers(lo, hi + 1))
    sensor = SensorRig()
    mirror = default_mirror(sensor)
    for _ in range(50):
        try:
            boxes = _place_boxes(rng, n, margin=0.05)
        except GenerationError:
            continue
        if not with_arm:
            return SceneModel(boxes=boxes, mirror=mirror, sensor=sensor, scene_id=f"{difficulty}-{seed}")
        target = int(rng.integers(n))
        for _ in range(40):
            arm = _arm_over(rng, boxes[target], boxes, sensor, mirror.center[0])
            if arm is not None:
                return SceneModel(
                    boxes=boxes, mirror=mirror, sensor=sensor, arm=arm, arm_target=target,
                    scene_id=f"{difficulty}-{seed}",
                )
    raise GenerationError(f"could not generate a {difficulty} scene for seed {seed}")
