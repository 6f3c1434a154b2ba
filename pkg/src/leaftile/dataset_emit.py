"""Materialize detector-ready datasets: splits, crops, label files, counts.

Output layout per dataset:

    images/            crops (tiles) or verbatim copies (originals)
    labels/            one `classIndex cx cy bw bh` file per item
    train.txt val.txt test.txt
    manifest.csv       id, classes, split
    tiles.csv          tile geometry (tiled datasets only)

Splits are stratified per class and assigned on SOURCE images; every
tile inherits its source image's split, so crops of one photograph can
never leak across train / val / test.
"""

from __future__ import annotations

import csv
import math
import random
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from PIL import Image

from .annotations import BBox, DiseaseClass, ImageRecord
from .errors import DataError, InternalError
from .tiler import EdgePolicy, Tile, parse_tile_name, tile_name

SPLITS = ("train", "val", "test")
MANIFEST_HEADER = ["id", "classes", "split"]
TILES_HEADER = ["tile_id", "source", "x0", "y0", "side", "box_count"]


@dataclass(frozen=True)
class ManifestEntry:
    item_id: str
    classes: tuple[DiseaseClass, ...]
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    seed: int

    def ids_for(self, split: str) -> list[str]:
        return [e.item_id for e in self.entries if e.split == split]

    def split_of(self) -> dict[str, str]:
        return {e.item_id: e.split for e in self.entries}

    def class_counts(self) -> dict[DiseaseClass, int]:
        counts: dict[DiseaseClass, int] = {}
        for entry in self.entries:
            for cls in entry.classes:
                counts[cls] = counts.get(cls, 0) + 1
        return counts


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation; each count is within 1 of n*f."""
    raw = [n * f for f in fractions]
    counts = [int(math.floor(x)) for x in raw]
    remainders = [(raw[i] - counts[i], -i) for i in range(len(fractions))]
    short = n - sum(counts)
    for _, neg_i in sorted(remainders, reverse=True)[:short]:
        counts[-neg_i] += 1
    return counts


def split_dataset(
    items: Sequence[tuple[str, Sequence[DiseaseClass]]],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetManifest:
    """Stratified train/val/test split, deterministic for a given seed.

    Items are stratified by their first class (negatives form their own
    stratum).  Every class stratum needs at least 10 items.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got {fractions}")
    strata: dict[Optional[DiseaseClass], list[str]] = {}
    class_of: dict[str, tuple[DiseaseClass, ...]] = {}
    for item_id, classes in items:
        if item_id in class_of:
            raise DataError(f"duplicate item id {item_id!r}")
        class_of[item_id] = tuple(classes)
        key = classes[0] if classes else None
        strata.setdefault(key, []).append(item_id)

    rng = random.Random(seed)
    assignment: dict[str, str] = {}
    for key in sorted(strata, key=lambda k: (k is None, int(k) if k is not None else 0)):
        ids = sorted(strata[key])
        if key is not None and len(ids) < 10:
            raise DataError(
                f"class {key.label} has only {len(ids)} items; need at least 10"
            )
        rng.shuffle(ids)
        n_train, n_val, _ = _allocate(len(ids), fractions)
        for i, item_id in enumerate(ids):
            if i < n_train:
                assignment[item_id] = "train"
            elif i < n_train + n_val:
                assignment[item_id] = "val"
            else:
                assignment[item_id] = "test"

    entries = tuple(
        ManifestEntry(item_id, class_of[item_id], assignment[item_id])
        for item_id in sorted(class_of)
    )
    return DatasetManifest(entries=entries, seed=seed)


def manifest_for_tiles(
    source_manifest: DatasetManifest, tiles: Sequence[Tile], n: int
) -> DatasetManifest:
    """Tile manifest inheriting each tile's split from its source image."""
    split_of = source_manifest.split_of()
    entries = []
    for tile in tiles:
        if tile.image_id not in split_of:
            raise DataError(f"tile source {tile.image_id!r} missing from manifest")
        classes = tuple(sorted({cls for cls, _, _ in tile.boxes}))
        entries.append(
            ManifestEntry(
                item_id=tile_name(tile.image_id, n, tile.x0, tile.y0, ext=""),
                classes=classes,
                split=split_of[tile.image_id],
            )
        )
    entries.sort(key=lambda e: e.item_id)
    return DatasetManifest(entries=tuple(entries), seed=source_manifest.seed)


def verify_no_split_leakage(
    source_manifest: DatasetManifest, tile_manifest: DatasetManifest
) -> list[str]:
    """Tile ids whose split differs from their source image's split."""
    split_of = source_manifest.split_of()
    violations = []
    for entry in tile_manifest.entries:
        source_id, _, _, _ = parse_tile_name(entry.item_id)
        if split_of.get(source_id) != entry.split:
            violations.append(entry.item_id)
    return violations


def yolo_line(cls: DiseaseClass, box: BBox, frame_w: float, frame_h: float) -> str:
    """`classIndex cx cy bw bh`, normalized to [0, 1], 6 fixed decimals."""
    cx = (box.xmin + box.xmax) / 2.0 / frame_w
    cy = (box.ymin + box.ymax) / 2.0 / frame_h
    bw = box.width / frame_w
    bh = box.height / frame_h
    eps = 1e-9
    for value in (cx, cy, bw, bh):
        if not -eps <= value <= 1.0 + eps:
            raise InternalError(f"normalized box value {value} outside [0, 1]")
    return f"{int(cls)} {cx:.6f} {cy:.6f} {bw:.6f} {bh:.6f}"


def write_manifest(manifest: DatasetManifest, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for entry in sorted(manifest.entries, key=lambda e: e.item_id):
            classes = ";".join(c.label for c in entry.classes)
            writer.writerow([entry.item_id, classes, entry.split])


def read_manifest(path: Path | str, seed: int = 0) -> DatasetManifest:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DataError(f"{path}: unexpected manifest header {header}")
        for line in reader:
            if not line:
                continue
            item_id, classes_raw, split = line
            if split not in SPLITS:
                raise DataError(f"{path}: unknown split {split!r}")
            classes = tuple(
                DiseaseClass.from_label(c) for c in classes_raw.split(";") if c
            )
            entries.append(ManifestEntry(item_id, classes, split))
    return DatasetManifest(entries=tuple(entries), seed=seed)


def _load_image_checked(path: Path, record: ImageRecord) -> Image.Image:
    image = Image.open(path)
    if image.size != (record.width, record.height):
        raise DataError(
            f"{record.id}: raster is {image.size[0]}x{image.size[1]} but the "
            f"annotation says {record.width}x{record.height}"
        )
    return image


def _crop_tile(
    image: Image.Image, tile: Tile, edge_policy: EdgePolicy
) -> Image.Image:
    arr = np.asarray(image)
    h, w = arr.shape[0], arr.shape[1]
    x1, y1 = tile.x0 + tile.side, tile.y0 + tile.side
    if x1 <= w and y1 <= h:
        out = arr[tile.y0 : y1, tile.x0 : x1]
    elif edge_policy is EdgePolicy.PAD_REFLECT:
        pad_x = max(0, x1 - w)
        pad_y = max(0, y1 - h)
        pads = [(0, pad_y), (0, pad_x)] + [(0, 0)] * (arr.ndim - 2)
        out = np.pad(arr, pads, mode="reflect")[tile.y0 : y1, tile.x0 : x1]
    else:
        raise InternalError(
            f"tile ({tile.x0}, {tile.y0}, side {tile.side}) overhangs a "
            f"{w}x{h} raster under clamp-shift"
        )
    return Image.fromarray(out)


def emit_original_dataset(
    records: Sequence[ImageRecord],
    manifest: DatasetManifest,
    out_dir: Path | str,
    images_root: Path | str | None = None,
    dataset_name: str = "original",
) -> None:
    """Emit the untiled corpus: label files, split lists, image copies."""
    out = Path(out_dir)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    by_id = {rec.id: rec for rec in records}
    split_of = manifest.split_of()
    listed: dict[str, list[str]] = {s: [] for s in SPLITS}

    copy_images = images_root is not None
    if copy_images:
        (out / "images").mkdir(parents=True, exist_ok=True)

    for entry in sorted(manifest.entries, key=lambda e: e.item_id):
        rec = by_id.get(entry.item_id)
        if rec is None:
            raise DataError(f"manifest id {entry.item_id!r} not in corpus")
        lines = [
            yolo_line(region.cls, region.bbox, rec.width, rec.height)
            for region in rec.regions
        ]
        (out / "labels" / f"{rec.id}.txt").write_text(
            "".join(line + "\n" for line in lines)
        )
        image_name = Path(rec.path).name
        if copy_images:
            src = Path(images_root) / rec.path
            if not src.exists():
                raise DataError(f"{rec.id}: image not found at {src}")
            _load_image_checked(src, rec).close()
            shutil.copyfile(src, out / "images" / image_name)
        listed[split_of[rec.id]].append(f"images/{image_name}")

    for split in SPLITS:
        (out / f"{split}.txt").write_text(
            "".join(line + "\n" for line in sorted(listed[split]))
        )
    write_manifest(manifest, out / "manifest.csv")
    write_counts_csv({dataset_name: manifest}, out / "counts.csv")


def emit_tiled_dataset(
    records: Sequence[ImageRecord],
    tiles_by_image: Mapping[str, Sequence[Tile]],
    source_manifest: DatasetManifest,
    n: int,
    out_dir: Path | str,
    images_root: Path | str | None = None,
    edge_policy: EdgePolicy = EdgePolicy.CLAMP_SHIFT,
) -> DatasetManifest:
    """Emit one tiled dataset; returns the tile manifest."""
    out = Path(out_dir)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    by_id = {rec.id: rec for rec in records}
    all_tiles = [t for image_id in sorted(tiles_by_image) for t in tiles_by_image[image_id]]
    tile_manifest = manifest_for_tiles(source_manifest, all_tiles, n)
    split_of = tile_manifest.split_of()
    listed: dict[str, list[str]] = {s: [] for s in SPLITS}

    write_images = images_root is not None
    if write_images:
        (out / "images").mkdir(parents=True, exist_ok=True)

    with open(out / "tiles.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TILES_HEADER)
        for image_id in sorted(tiles_by_image):
            rec = by_id.get(image_id)
            if rec is None:
                raise DataError(f"tiled image {image_id!r} not in corpus")
            source_image = None
            if write_images:
                src = Path(images_root) / rec.path
                if not src.exists():
                    raise DataError(f"{rec.id}: image not found at {src}")
                source_image = _load_image_checked(src, rec)
            for tile in tiles_by_image[image_id]:
                stem = tile_name(image_id, n, tile.x0, tile.y0, ext="")
                writer.writerow(
                    [stem, image_id, tile.x0, tile.y0, tile.side, len(tile.boxes)]
                )
                lines = [
                    yolo_line(cls, box, tile.side, tile.side)
                    for cls, box, _ in tile.boxes
                ]
                (out / "labels" / f"{stem}.txt").write_text(
                    "".join(line + "\n" for line in lines)
                )
                if source_image is not None:
                    crop = _crop_tile(source_image, tile, edge_policy)
                    crop.save(out / "images" / f"{stem}.png")
                listed[split_of[stem]].append(f"images/{stem}.png")
            if source_image is not None:
                source_image.close()

    for split in SPLITS:
        (out / f"{split}.txt").write_text(
            "".join(line + "\n" for line in sorted(listed[split]))
        )
    write_manifest(tile_manifest, out / "manifest.csv")
    write_counts_csv({f"n{n}": tile_manifest}, out / "counts.csv")
    return tile_manifest


def class_count_table(
    manifests: Mapping[str, DatasetManifest],
) -> list[list[str]]:
    """Rows: one per class present anywhere, then a totals row; one column
    per dataset, in the given mapping order."""
    names = list(manifests)
    counts = {name: manifests[name].class_counts() for name in names}
    present = sorted({cls for per in counts.values() for cls in per})
    rows: list[list[str]] = [["class"] + names]
    totals = {name: 0 for name in names}
    for cls in present:
        row = [cls.label]
        for name in names:
            value = counts[name].get(cls, 0)
            totals[name] += value
            row.append(str(value))
        rows.append(row)
    rows.append(["total"] + [str(totals[name]) for name in names])
    return rows


def write_counts_csv(manifests: Mapping[str, DatasetManifest], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(class_count_table(manifests))
