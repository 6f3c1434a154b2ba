"""Ground-truth leaf width from polygon regions.

Per region: rasterize the polygon to a binary mask, label connected
components (8-connectivity), fit a minimum-area rotated rectangle to the
largest component, and take the SHORT side as that leaf's width (rice
leaves are long and narrow, so the short side is the width).  The image
width is the maximum over regions, normalized by the image's longest
side into a percentage.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .annotations import ImageRecord, Polygon
from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_MIN_COMPONENT_PIXELS = 16

WIDTH_TABLE_HEADER = ["imageId", "lfw_px", "LW_percent", "leaf_count"]


@dataclass(frozen=True)
class RotatedRect:
    """Oriented rectangle: center, side lengths (long >= short), angle in degrees."""

    center: tuple[float, float]
    long_side: float
    short_side: float
    angle_deg: float

    def __post_init__(self) -> None:
        if not (self.long_side >= self.short_side > 0):
            raise DataError(
                f"invalid rotated rect sides: long={self.long_side}, short={self.short_side}"
            )


@dataclass(frozen=True)
class LeafWidthRecord:
    """Per-image widths: one entry per measured leaf plus the normalized value."""

    image_id: str
    per_leaf_widths: tuple[float, ...]
    lfw: float
    lw: float

    def __post_init__(self) -> None:
        if not self.per_leaf_widths:
            raise DataError(f"{self.image_id}: no measurable leaf")
        if self.lfw != max(self.per_leaf_widths):
            raise DataError(f"{self.image_id}: lfw must equal the largest leaf width")
        if not (0.0 < self.lw <= 100.0):
            raise DataError(f"{self.image_id}: normalized width {self.lw} outside (0, 100]")

    @property
    def leaf_count(self) -> int:
        return len(self.per_leaf_widths)


class WidthRow(NamedTuple):
    """One row of the width ground-truth table."""

    image_id: str
    lfw_px: float
    lw_percent: float
    leaf_count: int


def normalize_width(lfw: float, width: int, height: int) -> float:
    """Normalized leaf width in percent of the image's longest side."""
    return 100.0 * (lfw / max(width, height))


def rasterize_polygon(polygon: Polygon, width: int, height: int) -> np.ndarray:
    """Scanline even-odd fill; a pixel is foreground when its center is inside.

    Returns a bool array of shape (height, width).
    """
    if width < 1 or height < 1:
        raise DataError("mask dimensions must be >= 1")
    verts = np.asarray(polygon.vertices, dtype=np.float64)
    x0, y0 = verts[:, 0], verts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    ylo = np.minimum(y0, y1)
    yhi = np.maximum(y0, y1)

    # Crossings of each scanline (at pixel-center height py) with each edge,
    # half-open in y so shared vertices count once; horizontal edges never hit.
    py = np.arange(height, dtype=np.float64)[:, None] + 0.5
    hits = (ylo[None, :] <= py) & (py < yhi[None, :])
    dy = y1 - y0
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = x0[None, :] + (py - y0[None, :]) * (x1 - x0)[None, :] / dy[None, :]
    xs = np.where(hits, xs, np.inf)
    xs.sort(axis=1)
    n_hits = hits.sum(axis=1)

    # Even-odd fill via a difference array: +1 at each span start, -1 at its end.
    delta = np.zeros((height, width + 1), dtype=np.int32)
    max_pairs = int(n_hits.max()) if n_hits.size else 0
    for k in range(0, max_pairs, 2):
        rows = np.nonzero(n_hits > k + 1)[0]
        if rows.size == 0:
            break
        a = xs[rows, k]
        b = xs[rows, k + 1]
        # pixel centers x + 0.5 in [a, b)  <=>  x in [ceil(a - 0.5), ceil(b - 0.5))
        start = np.clip(np.ceil(a - 0.5).astype(np.int64), 0, width)
        stop = np.clip(np.ceil(b - 0.5).astype(np.int64), 0, width)
        np.add.at(delta, (rows, start), 1)
        np.add.at(delta, (rows, stop), -1)
    return np.cumsum(delta[:, :width], axis=1) > 0


def connected_components(
    mask: np.ndarray, min_pixels: int = DEFAULT_MIN_COMPONENT_PIXELS
) -> list[np.ndarray]:
    """8-connectivity components as (n, 2) arrays of (x, y) pixel coordinates.

    Returned largest-first; components smaller than min_pixels are dropped.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DataError("mask must be 2-dimensional")
    h, w = mask.shape

    # Row runs via a difference over the zero-padded, flattened mask.
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = mask
    flat = padded.ravel()
    d = np.diff(flat)
    starts = np.nonzero(d == 1)[0] + 1
    stops = np.nonzero(d == -1)[0] + 1
    if starts.size == 0:
        return []
    run_y = starts // (w + 2)
    run_x0 = starts % (w + 2) - 1
    run_x1 = stops % (w + 2) - 2  # inclusive end column

    n_runs = starts.size
    parent = np.arange(n_runs)

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    # Runs are ordered by (row, column); merge with 8-connected runs one row up.
    row_start: dict[int, int] = {}
    for idx in range(n_runs):
        row_start.setdefault(int(run_y[idx]), idx)
    for idx in range(n_runs):
        y = int(run_y[idx])
        prev = row_start.get(y - 1)
        if prev is None:
            continue
        j = prev
        while j < n_runs and run_y[j] == y - 1:
            if run_x0[j] > run_x1[idx] + 1:
                break
            if run_x1[j] + 1 >= run_x0[idx]:
                union(idx, j)
            j += 1

    roots = np.array([find(i) for i in range(n_runs)])
    components: dict[int, list[int]] = {}
    for idx, root in enumerate(roots):
        components.setdefault(int(root), []).append(idx)

    out = []
    for run_ids in components.values():
        pix = [
            np.stack(
                [
                    np.arange(run_x0[i], run_x1[i] + 1, dtype=np.int64),
                    np.full(run_x1[i] - run_x0[i] + 1, run_y[i], dtype=np.int64),
                ],
                axis=1,
            )
            for i in run_ids
        ]
        pts = np.concatenate(pix, axis=0)
        if len(pts) >= min_pixels:
            out.append(pts)
    out.sort(key=lambda p: (-len(p), int(p[:, 1].min()), int(p[:, 0].min())))
    return out


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull; returns CCW vertices, collinear points dropped."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    pts_list = [tuple(p) for p in pts]

    def build(seq):
        out: list[tuple[float, float]] = []
        for p in seq:
            while len(out) >= 2:
                (ox, oy), (ax, ay) = out[-2], out[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = build(pts_list)
    upper = build(reversed(pts_list))
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def _row_extremes(pixels: np.ndarray) -> np.ndarray:
    """Leftmost and rightmost pixel per row; hull vertices are among these."""
    order = np.lexsort((pixels[:, 0], pixels[:, 1]))
    pts = pixels[order]
    first = np.nonzero(np.diff(pts[:, 1], prepend=pts[0, 1] - 1))[0]
    last = np.append(first[1:] - 1, len(pts) - 1)
    return np.concatenate([pts[first], pts[last]], axis=0)


def fit_min_area_rect(pixels: np.ndarray) -> RotatedRect:
    """Minimum-area rotated rectangle around a component of pixels.

    Each pixel (x, y) is treated as the unit square [x, x+1) x [y, y+1),
    so an axis-aligned w x h block of pixels measures exactly w x h.
    Uses rotating calipers over the convex hull (the optimal rectangle
    shares a direction with some hull edge).
    """
    pts = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise DataError("zero-width component: empty pixel set")
    base = pts - pts[0]
    # Collinearity: every offset from the first pixel is parallel to the first
    # non-zero offset.
    ref = None
    for b in base:
        if b[0] != 0 or b[1] != 0:
            ref = b
            break
    if ref is None:
        raise DataError("zero-width component: all pixels coincide")
    cross = base[:, 0] * ref[1] - base[:, 1] * ref[0]
    if np.all(cross == 0):
        raise DataError("zero-width component: collinear pixels")

    hull_centers = _convex_hull(_row_extremes(pts).astype(np.float64))
    # Corners of the unit squares of the hull pixels; the hull of these
    # equals the hull of every pixel's square corners.
    offsets = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=np.float64)
    corners = (hull_centers[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    hull = _convex_hull(corners)

    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    u = edges[keep] / lengths[keep, None]
    v = np.stack([-u[:, 1], u[:, 0]], axis=1)
    proj_u = u @ hull.T
    proj_v = v @ hull.T
    du = proj_u.max(axis=1) - proj_u.min(axis=1)
    dv = proj_v.max(axis=1) - proj_v.min(axis=1)
    i = int(np.argmin(du * dv))

    cu = (proj_u[i].max() + proj_u[i].min()) / 2.0
    cv = (proj_v[i].max() + proj_v[i].min()) / 2.0
    center = cu * u[i] + cv * v[i]
    if du[i] >= dv[i]:
        long_side, short_side, direction = du[i], dv[i], u[i]
    else:
        long_side, short_side, direction = dv[i], du[i], v[i]
    angle = math.degrees(math.atan2(direction[1], direction[0])) % 180.0
    return RotatedRect(
        center=(float(center[0]), float(center[1])),
        long_side=float(long_side),
        short_side=float(short_side),
        angle_deg=float(angle),
    )


def region_leaf_width(
    polygon: Polygon,
    width: int,
    height: int,
    min_component_pixels: int = DEFAULT_MIN_COMPONENT_PIXELS,
) -> Optional[float]:
    """Width of one labeled region: short side of the largest component's fit.

    Rasterizes on the polygon's bounding window (integer-aligned, so pixel
    centers match the full-frame grid) at image resolution.  Returns None
    when no component survives the minimum-size filter.
    """
    bx0, by0, bx1, by1 = polygon.bounds()
    x0 = int(min(max(math.floor(bx0), 0), width))
    y0 = int(min(max(math.floor(by0), 0), height))
    x1 = int(min(max(math.ceil(bx1), 0), width))
    y1 = int(min(max(math.ceil(by1), 0), height))
    if x1 <= x0 or y1 <= y0:
        return None
    mask = rasterize_polygon(polygon.translated(-x0, -y0), x1 - x0, y1 - y0)
    components = connected_components(mask, min_pixels=min_component_pixels)
    if not components:
        return None
    try:
        rect = fit_min_area_rect(components[0])
    except DataError:
        return None
    return rect.short_side


def image_leaf_width(
    record: ImageRecord,
    min_component_pixels: int = DEFAULT_MIN_COMPONENT_PIXELS,
) -> LeafWidthRecord:
    """Representative leaf width of an image from its polygon regions.

    Regions are measured independently (overlapping leaves do not merge);
    the image value is the largest leaf width, normalized by the longest
    image side.
    """
    widths = []
    for region in record.regions:
        if region.polygon is None:
            continue
        w = region_leaf_width(
            region.polygon, record.width, record.height, min_component_pixels
        )
        if w is None:
            log.warning("%s: region too small to measure, skipped", record.id)
            continue
        widths.append(w)
    if not widths:
        raise DataError(f"{record.id}: no measurable leaf")
    lfw = max(widths)
    return LeafWidthRecord(
        image_id=record.id,
        per_leaf_widths=tuple(widths),
        lfw=lfw,
        lw=normalize_width(lfw, record.width, record.height),
    )


def write_width_table(records: Iterable[LeafWidthRecord], path: Path | str) -> None:
    """Width ground-truth table: fixed column order, 4 fractional digits."""
    rows = sorted(records, key=lambda r: r.image_id)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(WIDTH_TABLE_HEADER)
        for rec in rows:
            writer.writerow(
                [rec.image_id, f"{rec.lfw:.4f}", f"{rec.lw:.4f}", rec.leaf_count]
            )


def read_width_table(path: Path | str) -> list[WidthRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != WIDTH_TABLE_HEADER:
            raise DataError(f"{path}: unexpected width table header {header}")
        for line in reader:
            if not line:
                continue
            image_id, lfw_px, lw_percent, leaf_count = line
            rows.append(
                WidthRow(image_id, float(lfw_px), float(lw_percent), int(leaf_count))
            )
    return rows
