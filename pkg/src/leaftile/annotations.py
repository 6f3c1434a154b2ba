"""Polygon-annotated image records: parsing, validation, normalization.

Input documents are a documented subset of the LabelMe JSON layout:

    {
      "imagePath": "IMG_0001.jpg",
      "imageWidth": 4000,
      "imageHeight": 3000,
      "shapes": [
        {"label": "blast", "shape_type": "polygon",
         "points": [[x, y], [x, y], ...]},
        {"label": "bsp", "shape_type": "rectangle",
         "points": [[x1, y1], [x2, y2]]}
      ]
    }

Unknown fields are ignored.  Class labels match case-insensitively
through a small alias table because field data labels vary.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import DataError

log = logging.getLogger(__name__)


class DiseaseClass(enum.IntEnum):
    """The eight disease classes, with stable indices 0-7."""

    BLAST = 0
    BLIGHT = 1
    BSP = 2
    NBS = 3
    ORANGE = 4
    RED = 5
    RGSV = 6
    STREAK = 7

    @property
    def label(self) -> str:
        return _CLASS_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "DiseaseClass":
        key = " ".join(label.strip().lower().split())
        try:
            return _CLASS_ALIASES[key]
        except KeyError:
            raise DataError(f"unknown class label: {label!r}") from None


_CLASS_LABELS = {
    DiseaseClass.BLAST: "Blast",
    DiseaseClass.BLIGHT: "Blight",
    DiseaseClass.BSP: "BSP",
    DiseaseClass.NBS: "NBS",
    DiseaseClass.ORANGE: "Orange",
    DiseaseClass.RED: "Red",
    DiseaseClass.RGSV: "RGSV",
    DiseaseClass.STREAK: "Streak",
}

# Canonical names plus the long-form labels seen in field data.
_CLASS_ALIASES = {
    "blast": DiseaseClass.BLAST,
    "blight": DiseaseClass.BLIGHT,
    "bacterial leaf blight": DiseaseClass.BLIGHT,
    "bsp": DiseaseClass.BSP,
    "brown spot": DiseaseClass.BSP,
    "nbs": DiseaseClass.NBS,
    "narrow brown spot": DiseaseClass.NBS,
    "orange": DiseaseClass.ORANGE,
    "orange leaf": DiseaseClass.ORANGE,
    "red": DiseaseClass.RED,
    "red stripe": DiseaseClass.RED,
    "red strip": DiseaseClass.RED,
    "rgsv": DiseaseClass.RGSV,
    "rice grassy stunt virus": DiseaseClass.RGSV,
    "streak": DiseaseClass.STREAK,
    "streak disease": DiseaseClass.STREAK,
    "bacterial leaf streak": DiseaseClass.STREAK,
}


@dataclass(frozen=True)
class Polygon:
    """Closed polygon in pixel coordinates (x right, y down)."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise DataError(f"degenerate polygon: {len(self.vertices)} vertices")
        if self.area == 0.0:
            raise DataError("degenerate polygon: zero enclosed area")

    @property
    def area(self) -> float:
        """Enclosed area by the shoelace formula."""
        s = 0.0
        pts = self.vertices
        for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
            s += x0 * y1 - x1 * y0
        return abs(s) / 2.0

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [x for x, _ in self.vertices]
        ys = [y for _, y in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(tuple((x + dx, y + dy) for x, y in self.vertices))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, corner convention (xmin, ymin) to (xmax, ymax)."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise DataError(
                f"degenerate rectangle: ({self.xmin}, {self.ymin}, "
                f"{self.xmax}, {self.ymax})"
            )

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)

    def intersect(self, other: "BBox") -> Optional["BBox"]:
        """Intersection box, or None when the overlap has zero area."""
        x0 = max(self.xmin, other.xmin)
        y0 = max(self.ymin, other.ymin)
        x1 = min(self.xmax, other.xmax)
        y1 = min(self.ymax, other.ymax)
        if x0 < x1 and y0 < y1:
            return BBox(x0, y0, x1, y1)
        return None

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


def polygon_to_bbox(polygon: Polygon) -> BBox:
    """Tight axis-aligned hull of the polygon's vertices."""
    xmin, ymin, xmax, ymax = polygon.bounds()
    return BBox(xmin, ymin, xmax, ymax)


@dataclass(frozen=True)
class LabeledRegion:
    """One annotated object: class, optional polygon, derived/explicit box."""

    cls: DiseaseClass
    polygon: Optional[Polygon]
    bbox: BBox

    @classmethod
    def from_polygon(cls, disease: DiseaseClass, polygon: Polygon) -> "LabeledRegion":
        return cls(disease, polygon, polygon_to_bbox(polygon))


@dataclass(frozen=True)
class ImageRecord:
    """One annotated photograph. Immutable and safe to share across workers."""

    id: str
    path: str
    width: int
    height: int
    regions: tuple[LabeledRegion, ...]

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise DataError(f"{self.id}: image dimensions must be >= 1")

    @property
    def classes(self) -> tuple[DiseaseClass, ...]:
        """Distinct region classes in index order."""
        return tuple(sorted({r.cls for r in self.regions}))


def _clamp_vertices(
    points: Iterable[tuple[float, float]], width: int, height: int
) -> tuple[tuple[tuple[float, float], ...], int]:
    out = []
    n_clamped = 0
    for x, y in points:
        cx = min(max(float(x), 0.0), float(width))
        cy = min(max(float(y), 0.0), float(height))
        if cx != x or cy != y:
            n_clamped += 1
        out.append((cx, cy))
    return tuple(out), n_clamped


def _require(doc: dict, key: str, what: str):
    if key not in doc or doc[key] is None:
        raise DataError(f"malformed document: missing {what}")
    return doc[key]


def parse_annotation_file(document: bytes, source: str | None = None) -> ImageRecord:
    """Parse and validate one annotation document into an ImageRecord.

    Polygons are preserved verbatim (after clamping to image bounds);
    boxes are derived as the polygon hull when not given explicitly.
    Records with zero regions are accepted and flow through as negative
    images.
    """
    where = source or "<bytes>"
    try:
        doc = json.loads(document.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed document {where}: {exc}") from None
    if not isinstance(doc, dict):
        raise DataError(f"malformed document {where}: expected a JSON object")

    image_path = _require(doc, "imagePath", "imagePath")
    if "imageWidth" not in doc or "imageHeight" not in doc:
        raise DataError(f"{where}: missing image dimensions")
    try:
        width = int(doc["imageWidth"])
        height = int(doc["imageHeight"])
    except (TypeError, ValueError):
        raise DataError(f"{where}: missing image dimensions") from None

    image_id = Path(str(image_path)).stem
    regions: list[LabeledRegion] = []
    for shape in doc.get("shapes", []) or []:
        if not isinstance(shape, dict):
            raise DataError(f"{where}: malformed shape entry")
        label = _require(shape, "label", "shape label")
        cls = DiseaseClass.from_label(str(label))
        shape_type = str(shape.get("shape_type", "polygon")).lower()
        points = shape.get("points") or []
        if shape_type == "polygon":
            if len(points) < 3:
                raise DataError(
                    f"{where}: degenerate polygon ({len(points)} vertices)"
                )
            verts, n_clamped = _clamp_vertices(
                ((p[0], p[1]) for p in points), width, height
            )
            if n_clamped:
                log.warning(
                    "%s: clamped %d polygon vertices to image bounds",
                    image_id,
                    n_clamped,
                )
            regions.append(LabeledRegion.from_polygon(cls, Polygon(verts)))
        elif shape_type == "rectangle":
            if len(points) < 2:
                raise DataError(f"{where}: degenerate rectangle")
            verts, n_clamped = _clamp_vertices(
                ((p[0], p[1]) for p in points), width, height
            )
            if n_clamped:
                log.warning(
                    "%s: clamped %d rectangle corners to image bounds",
                    image_id,
                    n_clamped,
                )
            xs = [x for x, _ in verts]
            ys = [y for _, y in verts]
            bbox = BBox(min(xs), min(ys), max(xs), max(ys))
            regions.append(LabeledRegion(cls, None, bbox))
        else:
            log.warning("%s: ignoring unsupported shape_type %r", image_id, shape_type)

    return ImageRecord(
        id=image_id,
        path=str(image_path),
        width=width,
        height=height,
        regions=tuple(regions),
    )


def serialize_annotation(record: ImageRecord) -> bytes:
    """Serialize a record back to the annotation document layout.

    parse -> serialize -> parse is the identity on every field.
    """
    shapes = []
    for region in record.regions:
        if region.polygon is not None:
            shapes.append(
                {
                    "label": region.cls.label,
                    "shape_type": "polygon",
                    "points": [[x, y] for x, y in region.polygon.vertices],
                }
            )
        else:
            b = region.bbox
            shapes.append(
                {
                    "label": region.cls.label,
                    "shape_type": "rectangle",
                    "points": [[b.xmin, b.ymin], [b.xmax, b.ymax]],
                }
            )
    doc = {
        "imagePath": record.path,
        "imageWidth": record.width,
        "imageHeight": record.height,
        "shapes": shapes,
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def record_to_dict(record: ImageRecord) -> dict:
    """Normalized JSON form used for records.jsonl."""
    return {
        "id": record.id,
        "path": record.path,
        "width": record.width,
        "height": record.height,
        "regions": [
            {
                "class": r.cls.label,
                "polygon": [[x, y] for x, y in r.polygon.vertices]
                if r.polygon is not None
                else None,
                "bbox": list(r.bbox.as_tuple()),
            }
            for r in record.regions
        ],
    }


def record_from_dict(doc: dict) -> ImageRecord:
    regions = []
    for r in doc["regions"]:
        cls = DiseaseClass.from_label(r["class"])
        if r.get("polygon"):
            poly = Polygon(tuple((float(x), float(y)) for x, y in r["polygon"]))
            regions.append(LabeledRegion.from_polygon(cls, poly))
        else:
            b = r["bbox"]
            regions.append(LabeledRegion(cls, None, BBox(*map(float, b))))
    return ImageRecord(
        id=doc["id"],
        path=doc["path"],
        width=int(doc["width"]),
        height=int(doc["height"]),
        regions=tuple(regions),
    )


def write_records_jsonl(records: Iterable[ImageRecord], path) -> None:
    """Normalized corpus artifact: one JSON record per line, sorted by id."""
    ordered = sorted(records, key=lambda r: r.id)
    with open(path, "w") as fh:
        for rec in ordered:
            fh.write(json.dumps(record_to_dict(rec)) + "\n")


def read_records_jsonl(path) -> list[ImageRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_dict(json.loads(line)))
    return records


def load_corpus(documents: Iterable[tuple[str, bytes]]) -> list[ImageRecord]:
    """Parse many (source, bytes) documents, enforcing id uniqueness."""
    records = []
    seen: dict[str, str] = {}
    for source, payload in documents:
        rec = parse_annotation_file(payload, source=source)
        if rec.id in seen:
            raise DataError(
                f"duplicate image id {rec.id!r} in {source} (first seen in {seen[rec.id]})"
            )
        seen[rec.id] = source
        records.append(rec)
    return records
