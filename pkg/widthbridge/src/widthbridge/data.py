"""Reading the toolkit's manifest / width-table files and loading images.

The bridge never imports the main toolkit; these small parsers are the
file contract.  Splits come from manifest.csv exactly as given and are
never re-drawn here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

MANIFEST_HEADER = ["id", "classes", "split"]
WIDTH_TABLE_HEADER = ["imageId", "lfw_px", "LW_percent", "leaf_count"]
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

# ImageNet statistics, matching the backbone's pretraining recipe.
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class BridgeError(Exception):
    pass


@dataclass(frozen=True)
class Sample:
    image_id: str
    path: Path
    target_lw: float
    split: str


def read_manifest_splits(path: Path | str) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise BridgeError(f"manifest not found: {path}")
    splits: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise BridgeError(f"{path}: unexpected manifest header {header}")
        for line in reader:
            if line:
                splits[line[0]] = line[2]
    return splits


def read_width_targets(path: Path | str) -> dict[str, float]:
    path = Path(path)
    if not path.exists():
        raise BridgeError(f"width table not found: {path}")
    targets: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != WIDTH_TABLE_HEADER:
            raise BridgeError(f"{path}: unexpected width table header {header}")
        for line in reader:
            if line:
                targets[line[0]] = float(line[2])
    return targets


def find_image(images_root: Path, image_id: str) -> Path:
    for ext in IMAGE_EXTENSIONS:
        candidate = images_root / f"{image_id}{ext}"
        if candidate.exists():
            return candidate
    matches = sorted(
        p for p in images_root.rglob(f"{image_id}.*") if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not matches:
        raise BridgeError(f"missing image for id {image_id!r} under {images_root}")
    return matches[0]


def collect_samples(
    manifest_path: Path | str,
    width_table_path: Path | str,
    images_root: Path | str,
) -> list[Sample]:
    """One sample per image that has both a split and a width target."""
    splits = read_manifest_splits(manifest_path)
    targets = read_width_targets(width_table_path)
    images_root = Path(images_root)
    samples = []
    for image_id in sorted(splits):
        if image_id not in targets:
            continue
        samples.append(
            Sample(
                image_id=image_id,
                path=find_image(images_root, image_id),
                target_lw=targets[image_id],
                split=splits[image_id],
            )
        )
    if not samples:
        raise BridgeError("no trainable samples: manifest and width table share no ids")
    return samples


def letterbox(image: Image.Image, size: int) -> np.ndarray:
    """Aspect-preserving resize onto a black square canvas.

    Distorting the aspect ratio would distort the apparent leaf width,
    which is the very quantity being regressed.
    """
    image = image.convert("RGB")
    w, h = image.size
    scale = size / max(w, h)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    resized = image.resize((new_w, new_h), Image.BILINEAR)
    canvas = Image.new("RGB", (size, size))
    canvas.paste(resized, ((size - new_w) // 2, (size - new_h) // 2))
    return np.asarray(canvas, dtype=np.float32) / 255.0


def image_tensor(path: Path, size: int) -> torch.Tensor:
    try:
        with Image.open(path) as image:
            arr = letterbox(image, size)
    except (OSError, ValueError) as exc:
        raise BridgeError(f"unreadable image {path}: {exc}") from None
    arr = (arr - _MEAN) / _STD
    return torch.from_numpy(arr.transpose(2, 0, 1))


class WidthDataset(torch.utils.data.Dataset):
    def __init__(self, samples: list[Sample], input_size: int):
        self.samples = samples
        self.input_size = input_size

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx: int):
        sample = self.samples[idx]
        x = image_tensor(sample.path, self.input_size)
        y = torch.tensor([sample.target_lw], dtype=torch.float32)
        return x, y
