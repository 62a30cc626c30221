"""Bird's-eye-view height grids, occlusion regions and rule-based box detection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull
from shapely.geometry import Polygon

from .geometry import Frame, PointCloud

EMPTY = np.nan
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class BevGrid:
    """Max-height raster; ``cells[row, col]`` covers x in origin_x + col*cell, y in origin_y + row*cell."""

    cell_size: float
    origin: tuple[float, float]
    cells: np.ndarray

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.cells.ndim != 2 or min(self.cells.shape) < 1:
            raise ValueError("grid must be at least 1x1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def occupied(self) -> np.ndarray:
        return ~np.isnan(self.cells)

    def cell_center(self, rows, cols) -> np.ndarray:
        rows, cols = np.asarray(rows), np.asarray(cols)
        x = self.origin[0] + (cols + 0.5) * self.cell_size
        y = self.origin[1] + (rows + 0.5) * self.cell_size
        return np.stack([x, y], axis=-1)


def bev_project(
    cloud: PointCloud,
    cell_size: float = 0.01,
    bounds: Optional[tuple[float, float, float, float]] = None,
) -> BevGrid:
    """Per-cell maximum z of a World-frame cloud.

    ``bounds`` is (xmin, ymin, xmax, ymax); points outside are ignored.  By
    default the bounds enclose the cloud.
    """
    if cloud.frame != Frame.WORLD:
        raise ValueError(f"bev_project needs a World-frame cloud, got {cloud.frame.value}")
    pts = cloud.points
    if bounds is None:
        if len(pts) == 0:
            return BevGrid(cell_size, (0.0, 0.0), np.full((1, 1), EMPTY))
        x0 = math.floor(pts[:, 0].min() / cell_size) * cell_size
        y0 = math.floor(pts[:, 1].min() / cell_size) * cell_size
        nx = int(math.floor((pts[:, 0].max() - x0) / cell_size)) + 1
        ny = int(math.floor((pts[:, 1].max() - y0) / cell_size)) + 1
    else:
        x0, y0, x1, y1 = bounds
        nx = max(1, int(round((x1 - x0) / cell_size)))
        ny = max(1, int(round((y1 - y0) / cell_size)))
    flat = np.full(ny * nx, -np.inf)
    if len(pts):
        col = np.floor((pts[:, 0] - x0) / cell_size).astype(int)
        row = np.floor((pts[:, 1] - y0) / cell_size).astype(int)
        ok = (col >= 0) & (col < nx) & (row >= 0) & (row < ny)
        np.maximum.at(flat, row[ok] * nx + col[ok], pts[ok, 2])
    cells = flat.reshape(ny, nx)
    cells[np.isneginf(cells)] = EMPTY
    return BevGrid(cell_size, (float(x0), float(y0)), cells)


def fill_gaps(grid: BevGrid) -> BevGrid:
    """Fill single empty cells whose two opposite 4-neighbors are both occupied.

    Closes one-cell sampling holes from sparse returns without bridging
    gaps of two or more cells.
    """
    c = grid.cells
    pad = np.pad(c, 1, constant_values=np.nan)
    left, right = pad[1:-1, :-2], pad[1:-1, 2:]
    up, down = pad[:-2, 1:-1], pad[2:, 1:-1]
    horiz = ~np.isnan(left) & ~np.isnan(right)
    vert = ~np.isnan(up) & ~np.isnan(down)
    with np.errstate(invalid="ignore"):
        fill_h = np.where(horiz, np.fmax(left, right), np.nan)
        fill_v = np.where(vert, np.fmax(up, down), np.nan)
    fill = np.fmax(fill_h, fill_v)
    out = np.where(np.isnan(c), fill, c)
    return BevGrid(grid.cell_size, grid.origin, out)


@dataclass(frozen=True)
class OcclusionRegion:
    cells: np.ndarray  # (k, 2) of (row, col)
    area: int
    centroid: tuple[float, float]

    def __post_init__(self):
        if self.area < 1:
            raise ValueError("occlusion region must contain at least one cell")


def _components(mask: np.ndarray) -> list[np.ndarray]:
    labels, n = ndimage.label(mask, structure=FOUR_CONNECTED)
    if n == 0:
        return []
    order = np.argsort(labels, axis=None, kind="stable")
    flat = labels.ravel()[order]
    starts = np.searchsorted(flat, np.arange(1, n + 1))
    ends = np.searchsorted(flat, np.arange(1, n + 1), side="right")
    out = []
    for s, e in zip(starts, ends):
        idx = order[s:e]
        out.append(np.stack(np.unravel_index(idx, mask.shape), axis=1))
    return out


def detect_occlusions(grid: BevGrid, height_threshold: float, n: int = 1) -> list[OcclusionRegion]:
    """The ``n`` largest 4-connected regions of cells taller than ``height_threshold``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    with np.errstate(invalid="ignore"):
        mask = grid.cells > height_threshold
    comps = _components(mask)
    # largest first; equal areas: lower (row, col) of the bounding-box corner first
    comps.sort(key=lambda c: (-len(c), int(c[:, 0].min()), int(c[:, 1].min())))
    regions = []
    for cells in comps[:n]:
        centers = grid.cell_center(cells[:, 0], cells[:, 1])
        cx, cy = centers.mean(axis=0)
        regions.append(OcclusionRegion(cells, len(cells), (float(cx), float(cy))))
    return regions


@dataclass(frozen=True)
class DetectedBox:
    center: tuple[float, float]
    extent: tuple[float, float]
    yaw: float
    score: float

    def __post_init__(self):
        if min(self.extent) <= 0:
            raise ValueError("detected box extents must be positive")

    def corners(self) -> np.ndarray:
        return rectangle_corners(self.center, self.extent, self.yaw)


def rectangle_corners(center, extent, yaw: float) -> np.ndarray:
    hw, hd = extent[0] / 2, extent[1] / 2
    local = np.array([[-hw, -hd], [hw, -hd], [hw, hd], [-hw, hd]])
    c, s = math.cos(yaw), math.sin(yaw)
    return local @ np.array([[c, -s], [s, c]]).T + np.asarray(center)


def _wrap_quarter(yaw: float) -> float:
    """Map a rectangle yaw into [-pi/4, pi/4)."""
    return (yaw + math.pi / 4) % (math.pi / 2) - math.pi / 4


def min_area_rectangle(points: np.ndarray) -> tuple[tuple[float, float], tuple[float, float], float]:
    """Minimum-area enclosing rectangle of 2D points by rotating calipers over the hull edges.

    Returns (center, (w, d), yaw) with yaw in [-pi/4, pi/4); ``w`` runs along yaw.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    try:
        hull = pts[ConvexHull(pts).vertices]
    except Exception:
        hull = pts
    best = None
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.unique(np.round(np.arctan2(edges[:, 1], edges[:, 0]) % (math.pi / 2), 12))
    for a in angles:
        c, s = math.cos(a), math.sin(a)
        rot = np.array([[c, s], [-s, c]])  # world -> rectangle frame
        q = hull @ rot.T
        lo, hi = q.min(axis=0), q.max(axis=0)
        area = float(np.prod(hi - lo))
        if best is None or area < best[0] - 1e-12:
            best = (area, a, lo, hi, rot)
    _, a, lo, hi, rot = best
    center = rot.T @ ((lo + hi) / 2)
    w, d = hi - lo
    yaw = _wrap_quarter(a)
    if abs(yaw - a) > 1e-9 and abs(abs(yaw - a) - math.pi / 2) < 1e-6:
        w, d = d, w
    return (float(center[0]), float(center[1])), (float(w), float(d)), float(yaw)


def detect_boxes(
    grid: BevGrid,
    min_height: float,
    max_height: float,
    min_area: float = 0.01,
) -> list[DetectedBox]:
    """Rectangles fitted to connected cells whose height lies in [min_height, max_height]."""
    with np.errstate(invalid="ignore"):
        mask = (grid.cells >= min_height) & (grid.cells <= max_height)
    cs = grid.cell_size
    out = []
    for cells in _components(mask):
        if len(cells) * cs * cs < min_area:
            continue
        rows, cols = cells[:, 0], cells[:, 1]
        x0 = grid.origin[0] + cols * cs
        y0 = grid.origin[1] + rows * cs
        corners = np.concatenate(
            [np.stack([x0 + dx, y0 + dy], axis=1) for dx in (0.0, cs) for dy in (0.0, cs)]
        )
        center, extent, yaw = min_area_rectangle(corners)
        rect_cells = extent[0] * extent[1] / (cs * cs)
        score = float(min(1.0, len(cells) / rect_cells))
        out.append(DetectedBox(center, extent, yaw, score))
    out.sort(key=lambda b: (-b.score, b.center))
    return out


def polygon_iou(a: np.ndarray, b: np.ndarray) -> float:
    pa, pb = Polygon(a), Polygon(b)
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    return float(inter / union) if union > 0 else 0.0


def match_detections(
    detections: Sequence[DetectedBox], truth: Sequence[np.ndarray], iou_threshold: float = 0.5
) -> tuple[int, int, int]:
    """Greedy one-to-one matching by IoU.  ``truth`` holds ground-truth footprints (4, 2).

    Returns (true positives, false positives, false negatives).
    """
    if not detections or not len(truth):
        return 0, len(detections), len(truth)
    ious = np.array([[polygon_iou(d.corners(), t) for t in truth] for d in detections])
    tp = 0
    used_d, used_t = set(), set()
    for flat in np.argsort(-ious, axis=None, kind="stable"):
        i, j = np.unravel_index(flat, ious.shape)
        if ious[i, j] < iou_threshold:
            break
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        tp += 1
    return tp, len(detections) - tp, len(truth) - tp
