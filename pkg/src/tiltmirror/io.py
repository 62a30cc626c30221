"""ASCII PLY point clouds and 16-bit PGM depth images."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .geometry import Frame, PointCloud

PathLike = Union[str, Path]


def write_ply(path: PathLike, cloud: PointCloud, comments: Sequence[str] = ()) -> None:
    """Write ``x y z via_mirror`` vertices; the frame is stored as a comment."""
    lines = ["ply", "format ascii 1.0", f"comment frame {cloud.frame.value}"]
    lines += [f"comment {c}" for c in comments]
    lines += [
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar via_mirror",
        "end_header",
    ]
    body = [f"{x:.6f} {y:.6f} {z:.6f} {int(m)}" for (x, y, z), m in zip(cloud.points, cloud.via_mirror)]
    Path(path).write_text("\n".join(lines + body) + "\n")


def read_ply(path: PathLike) -> PointCloud:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    frame = Frame.WORLD
    count = None
    end = None
    for i, line in enumerate(text):
        parts = line.split()
        if parts[:2] == ["comment", "frame"] and len(parts) >= 3:
            frame = Frame(parts[2])
        elif parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
        elif parts == ["end_header"]:
            end = i
            break
    if count is None or end is None:
        raise ValueError(f"{path}: malformed PLY header")
    rows = [r.split() for r in text[end + 1 : end + 1 + count]]
    if len(rows) != count:
        raise ValueError(f"{path}: expected {count} vertices, found {len(rows)}")
    data = np.array(rows, dtype=float).reshape(count, 4)
    return PointCloud(data[:, :3], frame, data[:, 3].astype(bool))


def write_depth_pgm(path: PathLike, depth: np.ndarray) -> None:
    """Binary 16-bit PGM of depth in millimetres (0 = no return), clipped at 65.535 m."""
    depth = np.asarray(depth, dtype=float)
    mm = np.clip(np.round(np.nan_to_num(depth, nan=0.0) * 1000.0), 0, 65535).astype(">u2")
    h, w = mm.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode() + mm.tobytes())


def read_depth_pgm(path: PathLike) -> np.ndarray:
    """Depth in metres from a 16-bit PGM written by :func:`write_depth_pgm`."""
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1
    if fields[0] != b"P5" or int(fields[3]) != 65535:
        raise ValueError(f"{path}: expected a 16-bit binary PGM")
    w, h = int(fields[1]), int(fields[2])
    mm = np.frombuffer(raw, dtype=">u2", count=w * h, offset=pos).reshape(h, w)
    return mm.astype(float) / 1000.0
