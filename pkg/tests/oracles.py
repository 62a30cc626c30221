"""Independent reference implementations used by the tests."""

import math

import numpy as np

from tiltmirror.scene import arm_capsules


def sdf(points, scene):
    """Signed distance to ground, boxes and arm, written independently of the ray casters."""
    d = points[:, 2].copy()
    for b in scene.boxes + scene.fixtures:
        c, s = math.cos(b.yaw), math.sin(b.yaw)
        rel = points - b.center
        local = np.stack([c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1], rel[:, 2]], axis=1)
        q = np.abs(local) - np.asarray(b.size) / 2
        d = np.minimum(d, np.linalg.norm(np.maximum(q, 0), axis=1) + np.minimum(q.max(axis=1), 0))
    if scene.arm is not None:
        for cap in arm_capsules(scene.arm):
            ab = cap.p1 - cap.p0
            h = np.clip((points - cap.p0) @ ab / (ab @ ab), 0, 1)
            d = np.minimum(d, np.linalg.norm(points - cap.p0 - h[:, None] * ab, axis=1) - cap.radius)
    return d


def sphere_trace(origins, dirs, scene, steps=400, far=10.0):
    t = np.zeros(len(origins))
    for _ in range(steps):
        step = sdf(origins + t[:, None] * dirs, scene)
        t = np.minimum(t + step, far)
    return t
