"""External width predictions: sidecar file I/O, MAPE scoring, width selection.

The sidecar file is the contract with any external width estimator: a
two-column CSV `imageId,predictedLW_percent`, one row per image.  MAPE
divides each absolute error by the GROUND-TRUTH width (the standard
definition); dividing by the prediction would make the metric gameable.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .annotations import DiseaseClass
from .errors import DataError

log = logging.getLogger(__name__)

SIDECAR_HEADER = ["imageId", "predictedLW_percent"]


@dataclass(frozen=True)
class WidthPrediction:
    image_id: str
    predicted_lw: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.predicted_lw) or self.predicted_lw <= 0:
            raise DataError(
                f"{self.image_id}: predicted width must be finite and positive, "
                f"got {self.predicted_lw}"
            )


@dataclass(frozen=True)
class MapeReport:
    """Mean absolute percentage error, overall and per class.

    `overall` is the mean over all evaluated images, not the mean of the
    class means.
    """

    overall: float
    n_total: int
    per_class: dict[DiseaseClass, float]
    per_class_n: dict[DiseaseClass, int]


class WidthPolicy(enum.Enum):
    """Which width source feeds the tiler."""

    GROUND_TRUTH_FIRST = "ground-truth-first"
    PREDICTION_FIRST = "prediction-first"
    PREDICTION_ONLY = "prediction-only"


def load_predictions(document: bytes) -> list[WidthPrediction]:
    """Parse a sidecar prediction file; duplicate ids are rejected."""
    try:
        text = document.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"malformed sidecar file: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != SIDECAR_HEADER:
        raise DataError(f"unexpected sidecar header {header}, want {SIDECAR_HEADER}")
    out: list[WidthPrediction] = []
    seen: set[str] = set()
    for line in reader:
        if not line:
            continue
        if len(line) != 2:
            raise DataError(f"malformed sidecar row: {line}")
        image_id, raw = line[0], line[1]
        if image_id in seen:
            raise DataError(f"duplicate imageId in sidecar: {image_id}")
        seen.add(image_id)
        try:
            value = float(raw)
        except ValueError:
            raise DataError(f"{image_id}: non-numeric width {raw!r}") from None
        if value > 100.0:
            log.warning("%s: predicted width %.4f above 100%%", image_id, value)
        out.append(WidthPrediction(image_id, value))
    return out


def read_sidecar(path: Path | str) -> list[WidthPrediction]:
    return load_predictions(Path(path).read_bytes())


def write_sidecar(predictions: Iterable[WidthPrediction], path: Path | str) -> None:
    rows = sorted(predictions, key=lambda p: p.image_id)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SIDECAR_HEADER)
        for pred in rows:
            writer.writerow([pred.image_id, f"{pred.predicted_lw:.4f}"])


def mape(
    ground_truth: Sequence[tuple[str, Optional[DiseaseClass], float]],
    predictions: Iterable[WidthPrediction],
) -> MapeReport:
    """MAPE of predictions against ground truth, per class and overall.

    Every ground-truth id must have a prediction; predictions for unknown
    ids are ignored with a warning (sidecars may cover a superset corpus).
    """
    if not ground_truth:
        raise DataError("mape: empty ground truth")
    gt_ids = {image_id for image_id, _, _ in ground_truth}
    by_id: dict[str, float] = {}
    for pred in predictions:
        if pred.image_id not in gt_ids:
            log.warning("ignoring prediction for unknown imageId %s", pred.image_id)
            continue
        by_id[pred.image_id] = pred.predicted_lw
    missing = sorted(gt_ids - by_id.keys())
    if missing:
        raise DataError(f"missing predictions for {len(missing)} ids: {missing[:5]}")

    terms: list[float] = []
    class_terms: dict[DiseaseClass, list[float]] = {}
    for image_id, cls, gt_value in ground_truth:
        if gt_value == 0:
            raise DataError(f"{image_id}: ground-truth width is zero")
        term = abs(gt_value - by_id[image_id]) / gt_value
        terms.append(term)
        if cls is not None:
            class_terms.setdefault(cls, []).append(term)

    per_class = {
        cls: 100.0 * sum(vals) / len(vals) for cls, vals in sorted(class_terms.items())
    }
    per_class_n = {cls: len(vals) for cls, vals in sorted(class_terms.items())}
    return MapeReport(
        overall=100.0 * sum(terms) / len(terms),
        n_total=len(terms),
        per_class=per_class,
        per_class_n=per_class_n,
    )


def effective_width(
    ground_truth_lw: Optional[float],
    predicted_lw: Optional[float],
    policy: WidthPolicy,
) -> float:
    """Deterministic width selection for the tiler, per policy."""
    if policy is WidthPolicy.GROUND_TRUTH_FIRST:
        chosen = ground_truth_lw if ground_truth_lw is not None else predicted_lw
    elif policy is WidthPolicy.PREDICTION_FIRST:
        chosen = predicted_lw if predicted_lw is not None else ground_truth_lw
    elif policy is WidthPolicy.PREDICTION_ONLY:
        chosen = predicted_lw
    else:  # pragma: no cover - enum is closed
        raise DataError(f"unknown width policy {policy}")
    if chosen is None:
        raise DataError("width unavailable")
    return chosen


def write_mape_report(report: MapeReport, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "n", "mape_percent"])
        for cls, value in report.per_class.items():
            writer.writerow([cls.label, report.per_class_n[cls], f"{value:.4f}"])
        writer.writerow(["overall", report.n_total, f"{report.overall:.4f}"])
