"""Fixture corpus: synthetic stripe images whose widths ARE the visible signal.

The toolkit that consumes the sidecar is exercised strictly through its
CLI (`python -m leaftile.cli ...`), never imported.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image

IMG_SIZE = 160


def write_stripe_corpus(root: Path, widths_px: list[float], label: str = "blast") -> None:
    (root / "annotations").mkdir(parents=True, exist_ok=True)
    (root / "images").mkdir(parents=True, exist_ok=True)
    for i, w in enumerate(widths_px):
        image_id = f"stripe_{i:04d}"
        x0 = (IMG_SIZE - w) / 2.0
        x1 = x0 + w
        arr = np.full((IMG_SIZE, IMG_SIZE), 16, dtype=np.uint8)
        arr[8 : IMG_SIZE - 8, int(round(x0)) : int(round(x1))] = 220
        Image.fromarray(arr, mode="L").save(root / "images" / f"{image_id}.png")
        doc = {
            "imagePath": f"images/{image_id}.png",
            "imageWidth": IMG_SIZE,
            "imageHeight": IMG_SIZE,
            "shapes": [
                {
                    "label": label,
                    "shape_type": "polygon",
                    "points": [
                        [x0, 8.0],
                        [x1, 8.0],
                        [x1, IMG_SIZE - 8.0],
                        [x0, IMG_SIZE - 8.0],
                    ],
                }
            ],
        }
        (root / "annotations" / f"{image_id}.json").write_text(
            json.dumps(doc, indent=2) + "\n"
        )


def run_toolkit(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "leaftile.cli", *args],
        capture_output=True,
        text=True,
    )


def prepare_corpus(root: Path, widths_px: list[float], seed: int = 7) -> Path:
    """Write the corpus and run the toolkit pipeline over it; returns out dir."""
    write_stripe_corpus(root, widths_px)
    out = root / "out"
    proc = run_toolkit(
        "pipeline",
        "--corpus-root", str(root),
        "--annotations", "annotations/*.json",
        "--n", "3",
        "--seed", str(seed),
        "-o", str(out),
    )
    assert proc.returncode == 0, proc.stderr
    return out
