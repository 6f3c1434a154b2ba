"""Overlapping square tiling sized by leaf width, box remapping, detection merge.

The window side is N times the leaf width (N typically 3, 5 or 7),
windows overlap by 50% and slide left-to-right, top-down.  A window
at least twice the leaf size plus 50% overlap guarantees that any box
no larger than half a window in both extents lands whole in at least
one tile.  Clipped boxes keeping less than 7% of their original area
are discarded.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .annotations import BBox, DiseaseClass, ImageRecord
from .errors import DataError

DEFAULT_MIN_AREA_RATIO = 0.07
DEFAULT_OVERLAP_FRACTION = 0.5
DEFAULT_MIN_WINDOW = 64


class EdgePolicy(enum.Enum):
    """How the final window of each axis meets the image edge."""

    CLAMP_SHIFT = "clamp-shift"  # shift the last window inside the image
    PAD_REFLECT = "pad-reflect"  # let it overhang; pad pixels by reflection


@dataclass(frozen=True)
class TileSpec:
    """Tiling parameters; n is the leaf-width multiplier."""

    n: int = 3
    overlap_fraction: float = DEFAULT_OVERLAP_FRACTION
    min_area_ratio: float = DEFAULT_MIN_AREA_RATIO
    edge_policy: EdgePolicy = EdgePolicy.CLAMP_SHIFT
    min_window: int = DEFAULT_MIN_WINDOW

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise DataError(f"tile coefficient must be positive, got {self.n}")
        if not 0 < self.overlap_fraction < 1:
            raise DataError("overlap fraction must be in (0, 1)")
        if not 0 < self.min_area_ratio < 1:
            raise DataError("minimum area ratio must be in (0, 1)")
        if self.min_window < 1:
            raise DataError("minimum window must be >= 1")


TileBox = tuple[DiseaseClass, BBox, float]  # (class, box in tile coords, area ratio)


@dataclass(frozen=True)
class Tile:
    """One square window over an image, with remapped ground-truth boxes."""

    image_id: str
    x0: int
    y0: int
    side: int
    boxes: tuple[TileBox, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.x0 < 0 or self.y0 < 0 or self.side < 1:
            raise DataError(f"invalid tile geometry ({self.x0}, {self.y0}, {self.side})")


@dataclass(frozen=True)
class Detection:
    """A detector output box with confidence, on an image or a tile."""

    image_id: str
    cls: DiseaseClass
    box: BBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1]")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _round_half_down(x: float) -> int:
    return int(math.ceil(x - 0.5))


def window_size(lfw: float, spec: TileSpec, width: int, height: int) -> int:
    """Tile side in pixels: N * lfw, clamped to [min_window, min(w, h)]."""
    if lfw <= 0:
        raise DataError(f"leaf width must be positive, got {lfw}")
    side = _round_half_up(spec.n * lfw)
    side = max(side, spec.min_window)
    return min(side, min(width, height))


def tile_origins(
    dim: int,
    side: int,
    overlap_fraction: float = DEFAULT_OVERLAP_FRACTION,
    edge_policy: EdgePolicy = EdgePolicy.CLAMP_SHIFT,
) -> list[int]:
    """Window origins along one axis.

    Stride is side*(1-overlap) rounded half DOWN: rounding the exact .5
    up would break the guarantee that any interval of length <= side/2
    fits entirely in some window.  Under CLAMP_SHIFT a final origin at
    dim-side is appended when the last stride window stops short, so the
    windows always reach the far edge; under PAD_REFLECT the final
    window overhangs instead.
    """
    if side > dim:
        raise DataError(f"window side {side} exceeds dimension {dim}")
    stride = max(1, _round_half_down(side * (1.0 - overlap_fraction)))
    origins = list(range(0, dim - side + 1, stride))
    last = origins[-1]
    if last + side < dim:
        if edge_policy is EdgePolicy.CLAMP_SHIFT:
            origins.append(dim - side)
        else:
            origins.append(last + stride)
    return origins


def clip_box_to_tile(
    box: BBox, x0: int, y0: int, side: int
) -> Optional[tuple[BBox, float]]:
    """Intersect a box with a tile window and remap to tile coordinates.

    Returns (box in tile coords, intersection area / original box area),
    or None when the intersection is empty.
    """
    window = BBox(float(x0), float(y0), float(x0 + side), float(y0 + side))
    inter = box.intersect(window)
    if inter is None:
        return None
    ratio = inter.area / box.area
    return inter.translated(-x0, -y0), ratio


def tile_image(
    record: ImageRecord,
    lfw: float,
    spec: TileSpec,
    keep_negatives: bool = False,
    discard_whole_tile: bool = False,
) -> list[Tile]:
    """All tiles of one image with remapped, area-filtered boxes.

    Boxes keeping less than min_area_ratio of their area are dropped
    (the exact boundary is retained).  Tiles left with no boxes are
    dropped unless keep_negatives.  discard_whole_tile switches to the
    stricter reading that throws away any tile containing an
    under-threshold clip.
    """
    side = window_size(lfw, spec, record.width, record.height)
    xs = tile_origins(record.width, side, spec.overlap_fraction, spec.edge_policy)
    ys = tile_origins(record.height, side, spec.overlap_fraction, spec.edge_policy)
    gt = [(region.cls, region.bbox) for region in record.regions]

    tiles: list[Tile] = []
    for y0 in ys:
        for x0 in xs:
            kept: list[TileBox] = []
            discard_tile = False
            for cls, box in gt:
                clipped = clip_box_to_tile(box, x0, y0, side)
                if clipped is None:
                    continue
                remapped, ratio = clipped
                if ratio < spec.min_area_ratio:
                    if discard_whole_tile:
                        discard_tile = True
                        break
                    continue
                kept.append((cls, remapped, ratio))
            if discard_tile:
                continue
            if kept or keep_negatives:
                tiles.append(
                    Tile(
                        image_id=record.id,
                        x0=x0,
                        y0=y0,
                        side=side,
                        boxes=tuple(kept),
                    )
                )
    return tiles


_TILE_NAME_RE = re.compile(r"^(?P<id>.+)__N(?P<n>\d+)_x(?P<x0>\d+)_y(?P<y0>\d+)$")


def tile_name(image_id: str, n: int, x0: int, y0: int, ext: str = ".png") -> str:
    """Canonical tile file name: <imageId>__N<k>_x<x0>_y<y0>.<ext>."""
    return f"{image_id}__N{n}_x{x0}_y{y0}{ext}"


def parse_tile_name(name: str) -> tuple[str, int, int, int]:
    """Invert tile_name; the extension, if any, is ignored."""
    stem = name.rsplit(".", 1)[0] if "." in name else name
    m = _TILE_NAME_RE.match(stem)
    if not m:
        raise DataError(f"not a tile name: {name!r}")
    return m.group("id"), int(m.group("n")), int(m.group("x0")), int(m.group("y0"))


def _nms_sort_key(det: Detection):
    return (-det.confidence, det.box.xmin, det.box.ymin, det.box.xmax, det.box.ymax)


def _greedy_nms(dets: list[Detection], iou_thresh: float) -> list[Detection]:
    from .detection_eval import iou

    kept: list[Detection] = []
    for det in sorted(dets, key=_nms_sort_key):
        if all(iou(det.box, k.box) <= iou_thresh for k in kept):
            kept.append(det)
    return kept


def merge_tile_detections(
    tiles: Sequence[Tile],
    detections: Iterable[Detection],
    iou_thresh: float = 0.5,
) -> list[Detection]:
    """Translate per-tile detections back to image coordinates and de-duplicate.

    Each detection's image_id must be a tile name referring to one of the
    given tiles (of a single tiled dataset).  Duplicates from overlapping
    tiles are removed by greedy per-class non-maximum suppression, with
    confidence ties broken by box coordinates so the output is
    independent of input order.
    """
    index: dict[tuple[str, int, int], Tile] = {
        (t.image_id, t.x0, t.y0): t for t in tiles
    }
    translated: dict[tuple[str, DiseaseClass], list[Detection]] = {}
    for det in detections:
        source_id, _, x0, y0 = parse_tile_name(det.image_id)
        tile = index.get((source_id, x0, y0))
        if tile is None:
            raise DataError(f"unknown tile reference: {det.image_id!r}")
        moved = Detection(
            image_id=source_id,
            cls=det.cls,
            box=det.box.translated(tile.x0, tile.y0),
            confidence=det.confidence,
        )
        translated.setdefault((source_id, det.cls), []).append(moved)

    merged: list[Detection] = []
    for key in sorted(translated, key=lambda k: (k[0], int(k[1]))):
        merged.extend(_greedy_nms(translated[key], iou_thresh))
    merged.sort(key=lambda d: (d.image_id, int(d.cls), _nms_sort_key(d)))
    return merged
