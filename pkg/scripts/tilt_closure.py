"""How well the computed tilt aims the bounced optical axis at the occluded target."""

import argparse
import math
from dataclasses import replace

import numpy as np

from tiltmirror.pipeline import run_pipeline
from tiltmirror.scene import randomized_scene
from tiltmirror.sensor import NoiseModel, intersect_mirror


def aim_error(scene, result):
    pose = scene.sensor.world_from_tilted(result.theta)
    o, d = pose.t[None], pose.transform_directions([[0.0, 0.0, -1.0]])
    t, front = intersect_mirror(o, d, scene.mirror)
    if not (np.isfinite(t[0]) and front[0]):
        return math.inf
    bounce = o[0] + t[0] * d[0]
    n = scene.mirror.plane.normal
    out = d[0] - 2 * (d[0] @ n) * n
    to = np.asarray(result.target) - bounce
    return abs(math.degrees(math.atan2(out[0], -out[2]) - math.atan2(to[0], -to[2])))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", type=int, default=100)
    ap.add_argument("--radii", type=float, nargs="+", default=[0.0, 0.03, 0.05, 0.08],
                    help="tilt-unit radii to compare (m)")
    args = ap.parse_args()
    print(f"{'r (m)':>6s} {'max':>7s} {'mean':>7s} {'>=2deg':>7s}")
    for r in args.radii:
        errs = []
        for seed in range(args.scenes):
            scene = randomized_scene(seed, "easy" if seed % 2 == 0 else "hard")
            scene = replace(scene, sensor=replace(scene.sensor, tilt_radius=r))
            result = run_pipeline(scene, NoiseModel(seed=seed))
            if result.reflect is not None:
                errs.append(aim_error(scene, result))
        errs = np.array(errs)
        print(f"{r:6.3f} {errs.max():7.3f} {errs.mean():7.3f} {int((errs >= 2).sum()):7d}")


if __name__ == "__main__":
    main()
