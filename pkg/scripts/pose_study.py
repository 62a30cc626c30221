"""Calibration error against the weighted arm point count for random and searched poses."""

import argparse
import math

from scipy.stats import spearmanr

from tiltmirror.calibration import pose_quality_study
from tiltmirror.scene import calibration_scene
from tiltmirror.sensor import NoiseModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    for seed in args.seeds:
        study = pose_quality_study(calibration_scene(), noise=NoiseModel(seed=seed))
        rho = spearmanr([q.n_points for q in study], [q.translational_error for q in study])[0]
        print(f"\nseed {seed}: Spearman(n_points, trans error) = {rho:.3f}")
        print(f"{'pose':>9s} {'shoulder':>9s} {'elbow':>7s} {'n_points':>9s} {'trans (m)':>10s} {'rot (deg)':>10s}")
        for q in study:
            s, e = (math.degrees(a) for a in q.pose.joint_angles)
            print(f"{q.label:>9s} {s:9.1f} {e:7.1f} {q.n_points:9.0f} {q.translational_error:10.5f} {q.rotational_error:10.4f}")


if __name__ == "__main__":
    main()
