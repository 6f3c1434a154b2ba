"""Synthetic stripe-leaf corpora for demos, fixtures, and benchmarks.

Each image is a dark background with one or more bright rotated stripes;
the stripe rectangle doubles as the polygon annotation, so the measured
width has a known analytic value.
"""

from __future__ import annotations

import json
import math
import random
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw

from .annotations import DiseaseClass


def rect_polygon(
    cx: float, cy: float, length: float, width: float, angle_deg: float
) -> list[tuple[float, float]]:
    """Corners of a rotated rectangle, long axis along angle_deg."""
    a = math.radians(angle_deg)
    ux, uy = math.cos(a), math.sin(a)
    vx, vy = -uy, ux
    hl, hw = length / 2.0, width / 2.0
    return [
        (cx - ux * hl - vx * hw, cy - uy * hl - vy * hw),
        (cx + ux * hl - vx * hw, cy + uy * hl - vy * hw),
        (cx + ux * hl + vx * hw, cy + uy * hl + vy * hw),
        (cx - ux * hl + vx * hw, cy - uy * hl + vy * hw),
    ]


def inscribed_stripe(
    img_w: int,
    img_h: int,
    width_px: float,
    angle_deg: float,
    rng: random.Random,
    margin: float = 4.0,
) -> list[tuple[float, float]]:
    """A stripe of the given width that fits inside the image with margin."""
    a = math.radians(angle_deg)
    ux, uy = abs(math.cos(a)), abs(math.sin(a))
    vx, vy = uy, ux
    # Longest stripe that fits at this angle, shrunk a little at random.
    max_len_x = (img_w - 2 * margin - vx * width_px) / ux if ux > 1e-9 else math.inf
    max_len_y = (img_h - 2 * margin - vy * width_px) / uy if uy > 1e-9 else math.inf
    max_len = min(max_len_x, max_len_y)
    length = max(width_px * 1.5, max_len * rng.uniform(0.6, 0.95))
    half_w = (ux * length + vx * width_px) / 2.0
    half_h = (uy * length + vy * width_px) / 2.0
    cx = rng.uniform(margin + half_w, img_w - margin - half_w)
    cy = rng.uniform(margin + half_h, img_h - margin - half_h)
    return rect_polygon(cx, cy, length, width_px, angle_deg)


def make_corpus(
    out_dir: Path | str,
    n_images: int,
    classes: Sequence[DiseaseClass] = (DiseaseClass.BLAST, DiseaseClass.BLIGHT),
    seed: int = 0,
    img_size: tuple[int, int] = (320, 256),
    width_range: tuple[float, float] = (8.0, 40.0),
    leaves_per_image: tuple[int, int] = (1, 2),
    write_images: bool = True,
) -> list[str]:
    """Write images/ and annotations/ under out_dir; returns image ids.

    Classes cycle round-robin so every class gets an equal share.
    """
    rng = random.Random(seed)
    out = Path(out_dir)
    (out / "annotations").mkdir(parents=True, exist_ok=True)
    if write_images:
        (out / "images").mkdir(parents=True, exist_ok=True)

    ids = []
    img_w, img_h = img_size
    for i in range(n_images):
        image_id = f"synth_{i:04d}"
        cls = classes[i % len(classes)]
        n_leaves = rng.randint(*leaves_per_image)
        shapes = []
        polys = []
        for _ in range(n_leaves):
            width_px = rng.uniform(*width_range)
            angle = rng.uniform(0.0, 179.0)
            poly = inscribed_stripe(img_w, img_h, width_px, angle, rng)
            polys.append(poly)
            shapes.append(
                {
                    "label": cls.label.lower(),
                    "shape_type": "polygon",
                    "points": [[round(x, 2), round(y, 2)] for x, y in poly],
                }
            )
        doc = {
            "imagePath": f"images/{image_id}.png",
            "imageWidth": img_w,
            "imageHeight": img_h,
            "shapes": shapes,
        }
        (out / "annotations" / f"{image_id}.json").write_text(
            json.dumps(doc, indent=2) + "\n"
        )
        if write_images:
            image = Image.fromarray(
                np.full((img_h, img_w), 24, dtype=np.uint8), mode="L"
            )
            draw = ImageDraw.Draw(image)
            for poly in polys:
                draw.polygon([(x, y) for x, y in poly], fill=210)
            image.save(out / "images" / f"{image_id}.png")
        ids.append(image_id)
    return ids
