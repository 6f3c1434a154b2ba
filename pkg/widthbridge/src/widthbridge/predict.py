"""Inference: predict normalized widths and emit the sidecar CSV."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import torch

from .data import BridgeError, image_tensor
from .train import build_model

SIDECAR_HEADER = ["imageId", "predictedLW_percent"]

LW_FLOOR = 0.01  # predictions clip into (0, 100]
LW_CEIL = 100.0


def load_checkpoint(path: Path | str):
    path = Path(path)
    if not path.exists():
        raise BridgeError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = build_model(pretrained=False)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return (
        model,
        int(payload["input_size"]),
        float(payload["target_mean"]),
        float(payload["target_std"]),
    )


def predict_widths(
    checkpoint_path: Path | str,
    image_paths: Sequence[Path | str],
    out_sidecar: Path | str,
    batch_size: int = 16,
) -> Path:
    """Write one prediction row per distinct input image; returns the path.

    Duplicate input paths collapse to a single row; image ids are the
    file stems, matching the toolkit's convention.
    """
    model, input_size, target_mean, target_std = load_checkpoint(checkpoint_path)
    unique: dict[str, Path] = {}
    for raw in image_paths:
        path = Path(raw)
        unique.setdefault(path.stem, path)

    rows: list[tuple[str, float]] = []
    ids = sorted(unique)
    with torch.no_grad():
        for start in range(0, len(ids), batch_size):
            chunk = ids[start : start + batch_size]
            batch = torch.stack([image_tensor(unique[i], input_size) for i in chunk])
            preds = (model(batch).squeeze(1) * target_std + target_mean).tolist()
            for image_id, value in zip(chunk, preds):
                rows.append((image_id, min(max(value, LW_FLOOR), LW_CEIL)))

    out_sidecar = Path(out_sidecar)
    out_sidecar.parent.mkdir(parents=True, exist_ok=True)
    with open(out_sidecar, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SIDECAR_HEADER)
        for image_id, value in rows:
            writer.writerow([image_id, f"{value:.4f}"])
    return out_sidecar
