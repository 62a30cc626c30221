"""Command-line interface.

Commands::

    tiltmirror scene     --seed 7 --difficulty easy --out scene.json
    tiltmirror scene     --calibration --out calib.json
    tiltmirror capture   scene.json --tilt-deg auto --strategy mirror --out cloud.ply [--depth depth.pgm]
    tiltmirror run       scene.json --strategies all --out-dir results/
    tiltmirror calibrate scene.json --sweep=-5..5 --step 1 --runs 10 --pose optimal --out sweep.csv \
                         [--runs-out runs.csv] [--write-scene calibrated.json]

The root seed comes from ``--seed`` or the ``TILTMIRROR_SEED`` environment
variable (default 0).  Every output file is a deterministic function of the
scene document and the root seed; timings go to stderr only.

Exit codes: 0 success, 2 usage error, 3 invalid scene or input, 4 runtime failure.

Scene document (JSON)
---------------------
Required: ``boxes``.  Lengths in metres, angles in radians.

``id``                     scene identifier (string)
``sensor``                 ``{"position": [x, y, z], "tilt_radius": r}``
``mirror``                 ``{"plane": [a, b, c, d], "center": [x, y, z], "width", "height", "reflectance"}``;
                           the normal (a, b, c) points out of the reflective face.  Omitted: vertical
                           mirror 1.2 m beyond the sensor along +X.
``boxes`` / ``fixtures``   lists of ``{"center": [x, y(, z)], "size": [w, d, h], "yaw": rad}``;
                           a 2D center rests the box on the ground.  Fixtures are static clutter
                           that is neither detected nor scored.
``arm``                    ``{"base": [x, y], "base_yaw", "link_lengths": [l1, l2], "link_radius",
                           "joint_angles": [shoulder, elbow], "joint_limits": [[lo, hi], [lo, hi]]}``
``arm_target``             index of the box the arm hides (scored for coverage)
``height_threshold``       arm/object separation height (default: tallest box + 0.05)
``expected_robots``        number of arm regions to look for (default 1)
``expected_object_height`` height used when aiming at an occluded region (default 0.15)
``calibrated_plane``       current mirror estimate [a, b, c, d] used by perception (default: true plane)
``camera``                 ``{"width", "height", "horizontal_fov_deg", "vertical_fov_deg"}``; defaults
                           are 320x240 for capture/run and 160x120 for calibrate, both 60x45 deg
``noise``                  ``{"sigma0", "d0", "exponent", "dropout_threshold"}``
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .calibration import (
    SUMMARY_FIELDS,
    SweepRow,
    calibrate_scene,
    calibration_sweep,
    find_optimal_pose,
    summary_csv_rows,
    sweep_summary,
)
from .evaluation import STRATEGIES, RunReport, evaluate_scene
from .geometry import householder_from_plane
from .io import write_depth_pgm, write_ply
from .pipeline import PipelineConfig, UnreachableTargetError, fuse, optimal_tilt_angle, run_pipeline, to_world
from .scene import (ConfigError, SceneError, SceneModel, calibration_scene, randomized_scene, scene_from_dict,
                    scene_to_config)
from .sensor import CameraIntrinsics, NoiseModel, derive_seed, render

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4
SEED_ENV = "TILTMIRROR_SEED"


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def load_scene(path: str, defaults: Optional[CameraIntrinsics] = None) -> tuple[SceneModel, CameraIntrinsics, dict]:
    """Scene, camera intrinsics and raw noise settings from a JSON document.

    Camera fields missing from the document come from ``defaults``
    (the pipeline camera if not given).
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scene {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    try:
        scene = scene_from_dict(doc)
    except (TypeError, IndexError, AttributeError) as exc:
        raise ConfigError(f"{path}: malformed scene document: {exc}") from None
    cam = doc.get("camera") or {}
    defaults = PipelineConfig().intrinsics if defaults is None else defaults
    try:
        intrinsics = CameraIntrinsics(
            width=int(cam.get("width", defaults.width)),
            height=int(cam.get("height", defaults.height)),
            horizontal_fov=math.radians(float(cam.get("horizontal_fov_deg", math.degrees(defaults.horizontal_fov)))),
            vertical_fov=math.radians(float(cam.get("vertical_fov_deg", math.degrees(defaults.vertical_fov)))),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"camera: {exc}") from None
    noise = doc.get("noise") or {}
    if not isinstance(noise, dict):
        raise ConfigError("noise: expected an object")
    return scene, intrinsics, noise


def noise_model(settings: dict, seed: int) -> NoiseModel:
    unknown = set(settings) - {"sigma0", "d0", "exponent", "dropout_threshold"}
    if unknown:
        raise ConfigError(f"noise: unknown field(s) {', '.join(sorted(unknown))}")
    try:
        return NoiseModel(**{k: float(v) if k != "exponent" else int(v) for k, v in settings.items()}, seed=seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"noise: {exc}") from None


def parse_sweep(text: str, step: float) -> list[float]:
    """``"-5..5"`` with step 1 -> [-5, -4, ..., 5]; a single number gives one angle."""
    if step <= 0:
        raise UsageError("--step must be positive")
    try:
        if ".." in text:
            lo, hi = (float(x) for x in text.split("..", 1))
        else:
            lo = hi = float(text)
    except ValueError:
        raise UsageError(f"--sweep must look like LO..HI, got {text!r}") from None
    if hi < lo:
        raise UsageError("--sweep upper bound is below the lower bound")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 9) for i in range(n)]


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_scene(args) -> int:
    scene = calibration_scene() if args.calibration else randomized_scene(args.seed, args.difficulty)
    Path(args.out).write_text(scene_to_config(scene))
    hidden = "" if scene.arm_target is None else f", arm over box {scene.arm_target}"
    print(f"{scene.scene_id}: {len(scene.boxes)} boxes{hidden} -> {args.out}")
    return EXIT_OK


def cmd_capture(args) -> int:
    scene, intrinsics, noise_cfg = load_scene(args.scene)
    noise = noise_model(noise_cfg, args.seed)
    h_m = householder_from_plane(scene.believed_mirror_plane())
    if args.strategy == "direct":
        theta = 0.0 if args.tilt_deg == "auto" else math.radians(_float(args.tilt_deg, "--tilt-deg"))
        stream = 1
    else:
        if args.tilt_deg == "auto":
            result = run_pipeline(scene, noise, PipelineConfig(intrinsics=intrinsics))
            target = result.target or _box_target(scene)
            theta = optimal_tilt_angle(scene.sensor, target, h_m)
        else:
            theta = math.radians(_float(args.tilt_deg, "--tilt-deg"))
        stream = 2
    cap = render(scene, theta, noise.with_seed(derive_seed(noise.seed, stream)), intrinsics)
    frame = args.frame
    cloud = to_world(cap, scene.sensor, h_m) if frame == "world" else cap.cloud
    write_ply(args.out, cloud, comments=[f"scene {scene.scene_id}", f"tilt_deg {math.degrees(theta):.6f}",
                                        f"seed {args.seed}"])
    if args.depth:
        write_depth_pgm(args.depth, cap.depth_image)
    print(f"{len(cloud)} points ({int(cloud.via_mirror.sum())} via mirror) at tilt "
          f"{math.degrees(theta):.3f} deg -> {args.out}")
    return EXIT_OK


def _box_target(scene: SceneModel):
    from .evaluation import fallback_target

    return fallback_target(scene)


def _float(text: str, flag: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"{flag} must be a number or 'auto', got {text!r}") from None


def cmd_run(args) -> int:
    scene, intrinsics, noise_cfg = load_scene(args.scene)
    noise = noise_model(noise_cfg, args.seed)
    if args.strategies == "all":
        strategies = list(STRATEGIES)
    else:
        strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
        bad = [s for s in strategies if s not in STRATEGIES]
        if bad or not strategies:
            raise UsageError(f"--strategies: unknown {bad or 'empty list'}; choose from {', '.join(STRATEGIES)} or all")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = PipelineConfig(intrinsics=intrinsics)
    t0 = time.perf_counter()
    ev = evaluate_scene(scene, noise, config, strategies)
    result = run_pipeline(scene, noise, config)
    _write_csv(out / "report.csv", RunReport.CSV_FIELDS, [r.csv_row() for r in ev.reports])
    write_ply(out / "fused.ply", result.fused.cloud, comments=[f"scene {scene.scene_id}", f"seed {args.seed}"])
    for r in ev.reports:
        print(f"{r.strategy:14s} coverage {r.coverage:.4f}  tp/fp/fn@50 {r.tp50}/{r.fp50}/{r.fn50}")
    _log(f"wall time {(time.perf_counter() - t0) * 1e3:.0f} ms")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    scene, intrinsics, noise_cfg = load_scene(args.scene, CameraIntrinsics())
    if scene.arm is None:
        raise ConfigError("calibrate: scene has no arm")
    noise = noise_model(noise_cfg, args.seed)
    angles = parse_sweep(args.sweep, args.step)
    if any(abs(a) > 10.0 for a in angles):
        raise UsageError("--sweep angles must lie within -10..10 degrees")
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    t0 = time.perf_counter()
    pose = args.pose
    if pose == "optimal":
        h_init = householder_from_plane(scene.mirror.plane)
        pose = find_optimal_pose(scene, noise=noise, intrinsics=intrinsics, h_init=h_init).pose
    rows = calibration_sweep(scene, angles, pose, args.runs, noise, intrinsics)
    _write_csv(Path(args.out), SUMMARY_FIELDS, summary_csv_rows(rows))
    if args.runs_out:
        _write_csv(Path(args.runs_out), SweepRow.CSV_FIELDS, [r.csv_row() for r in rows])
    for angle, s in sweep_summary(rows).items():
        print(f"{angle:+6.2f} deg  trans {s['translational_error']:.5f} m  rot {s['rotational_error']:.4f} deg  "
              f"converged {s['converged']:.0%}")
    if args.write_scene:
        arm, res = calibrate_scene(scene, noise, intrinsics)
        if not res.converged:
            raise RuntimeError("calibration of the scene's mirror did not converge; scene not written")
        updated = replace(scene.with_arm(arm), calibrated_plane=res.plane_estimated)
        Path(args.write_scene).write_text(scene_to_config(updated))
        print(f"estimated mirror plane {[round(v, 6) for v in res.plane_estimated.as_tuple()]} -> {args.write_scene}")
    _log(f"wall time {(time.perf_counter() - t0) * 1e3:.0f} ms")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tiltmirror", description="Tilt-mirror depth sensing simulator.")
    p.add_argument("--seed", type=int, default=None, help=f"root seed (default ${SEED_ENV} or 0)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scene", help="generate a random scene document")
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    s.add_argument("--difficulty", choices=("easy", "hard"), default="easy")
    s.add_argument("--calibration", action="store_true", help="write the fixed calibration workcell instead")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scene)

    c = sub.add_parser("capture", help="render one capture to PLY")
    c.add_argument("scene")
    c.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    c.add_argument("--tilt-deg", default="auto", help="tilt angle in degrees, or 'auto'")
    c.add_argument("--strategy", choices=("direct", "mirror"), default="direct")
    c.add_argument("--frame", choices=("sensor", "world"), default="sensor",
                   help="sensor: raw TiltedSensor points; world: mirror points realized")
    c.add_argument("--out", required=True)
    c.add_argument("--depth", help="also write the depth image as 16-bit PGM (mm)")
    c.set_defaults(func=cmd_capture)

    r = sub.add_parser("run", help="run sensing strategies and write a report")
    r.add_argument("scene")
    r.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    r.add_argument("--strategies", default="all", help="comma list of " + ", ".join(STRATEGIES) + " or all")
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_run)

    k = sub.add_parser("calibrate", help="mirror perturbation sweep")
    k.add_argument("scene")
    k.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    k.add_argument("--sweep", default="-5..5", help="mirror tilt range in degrees, LO..HI")
    k.add_argument("--step", type=float, default=1.0)
    k.add_argument("--runs", type=int, default=10)
    k.add_argument("--pose", choices=("optimal", "random"), default="optimal")
    k.add_argument("--out", required=True)
    k.add_argument("--runs-out", help="also write one CSV row per run")
    k.add_argument("--write-scene", help="calibrate the scene's mirror and write the scene with the "
                                          "optimal arm pose and the estimated plane as calibrated_plane")
    k.set_defaults(func=cmd_calibrate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None:
            args.seed = default_seed()
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SceneError, ValueError) as exc:
        if isinstance(exc, UnreachableTargetError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
