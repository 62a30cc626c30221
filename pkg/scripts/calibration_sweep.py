"""Mirror tilt sweep: calibration error per perturbation angle, optimal vs random arm pose."""

import argparse

from tiltmirror.calibration import calibration_sweep, sweep_summary
from tiltmirror.scene import calibration_scene
from tiltmirror.sensor import NoiseModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--poses", nargs="+", default=["optimal", "random"], choices=["optimal", "random"])
    args = ap.parse_args()
    angles = [float(a) for a in range(-5, 6)]
    for pose in args.poses:
        rows = calibration_sweep(calibration_scene(), angles, pose, args.runs, NoiseModel(seed=args.seed))
        print(f"\npose: {pose}")
        print(f"{'angle':>6s} {'trans (m)':>10s} {'rot (deg)':>10s} {'converged':>10s}")
        for angle, s in sweep_summary(rows).items():
            print(f"{angle:6.1f} {s['translational_error']:10.5f} {s['rotational_error']:10.4f} {s['converged']:10.0%}")


if __name__ == "__main__":
    main()
