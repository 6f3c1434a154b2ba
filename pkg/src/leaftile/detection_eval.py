"""Detection scoring: IoU, per-class average precision, mAP.

AP is the all-point interpolated area under the precision-recall curve
at a single IoU threshold (0.5 by default), matching the evaluator
conventions of the darknet family.  Matching is greedy: detections are
ranked by descending confidence (ties broken by box coordinates, then
image id, for determinism) and each claims the best still-unmatched
ground-truth box of its class in its image.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .annotations import BBox, DiseaseClass, ImageRecord
from .errors import DataError
from .tiler import Detection

GroundTruth = tuple[str, DiseaseClass, BBox]  # (imageId, class, box in image pixels)


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvalReport:
    per_class_ap: dict[DiseaseClass, float]
    mean_ap: float
    counts: dict[DiseaseClass, ClassCounts]
    iou_threshold: float


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0 when disjoint."""
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    ia = inter.area
    return ia / (a.area + b.area - ia)


def _rank_key(det: Detection):
    return (
        -det.confidence,
        det.box.xmin,
        det.box.ymin,
        det.box.xmax,
        det.box.ymax,
        det.image_id,
    )


def evaluate_class(
    detections: Sequence[Detection],
    ground_truth: Sequence[GroundTruth],
    cls: DiseaseClass,
    iou_thresh: float = 0.5,
) -> tuple[Optional[float], ClassCounts]:
    """AP and TP/FP/FN counts for one class; AP is None without ground truth."""
    gt_boxes: dict[str, list[BBox]] = {}
    for image_id, gt_cls, box in ground_truth:
        if gt_cls == cls:
            gt_boxes.setdefault(image_id, []).append(box)
    n_gt = sum(len(v) for v in gt_boxes.values())
    dets = sorted((d for d in detections if d.cls == cls), key=_rank_key)

    if n_gt == 0:
        return None, ClassCounts(tp=0, fp=len(dets), fn=0)

    matched: dict[str, list[bool]] = {k: [False] * len(v) for k, v in gt_boxes.items()}
    tp_flags: list[bool] = []
    for det in dets:
        candidates = gt_boxes.get(det.image_id, [])
        best_iou, best_idx = 0.0, -1
        for idx, box in enumerate(candidates):
            if matched[det.image_id][idx]:
                continue
            value = iou(det.box, box)
            if value > best_iou:
                best_iou, best_idx = value, idx
        if best_idx >= 0 and best_iou >= iou_thresh:
            matched[det.image_id][best_idx] = True
            tp_flags.append(True)
        else:
            tp_flags.append(False)

    tp = sum(tp_flags)
    counts = ClassCounts(tp=tp, fp=len(tp_flags) - tp, fn=n_gt - tp)
    if not tp_flags:
        return 0.0, counts

    # Precision-recall staircase, then the monotone precision envelope.
    recalls: list[float] = []
    precisions: list[float] = []
    cum_tp = 0
    for i, flag in enumerate(tp_flags, start=1):
        cum_tp += int(flag)
        recalls.append(cum_tp / n_gt)
        precisions.append(cum_tp / i)
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recalls, envelope):
        ap += (r - prev_recall) * p
        prev_recall = r
    return ap, counts


def average_precision(
    detections: Sequence[Detection],
    ground_truth: Sequence[GroundTruth],
    cls: DiseaseClass,
    iou_thresh: float = 0.5,
) -> Optional[float]:
    return evaluate_class(detections, ground_truth, cls, iou_thresh)[0]


def mean_ap(
    detections: Sequence[Detection],
    ground_truth: Sequence[GroundTruth],
    iou_thresh: float = 0.5,
    classes: Iterable[DiseaseClass] = tuple(DiseaseClass),
) -> EvalReport:
    """Per-class AP and their unweighted mean over classes with ground truth."""
    per_class: dict[DiseaseClass, float] = {}
    counts: dict[DiseaseClass, ClassCounts] = {}
    for cls in classes:
        ap, cls_counts = evaluate_class(detections, ground_truth, cls, iou_thresh)
        counts[cls] = cls_counts
        if ap is not None:
            per_class[cls] = ap
    if not per_class:
        raise DataError("no class has ground truth")
    return EvalReport(
        per_class_ap=per_class,
        mean_ap=sum(per_class.values()) / len(per_class),
        counts=counts,
        iou_threshold=iou_thresh,
    )


def ground_truth_from_records(records: Iterable[ImageRecord]) -> list[GroundTruth]:
    return [(rec.id, region.cls, region.bbox) for rec in records for region in rec.regions]


def parse_detections(document: bytes) -> list[Detection]:
    """Lines `imageId classIndex confidence xmin ymin xmax ymax`, image pixels."""
    out = []
    for lineno, raw in enumerate(document.decode("utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise DataError(f"detection line {lineno}: expected 7 fields, got {len(parts)}")
        image_id, cls_idx, conf, x0, y0, x1, y1 = parts
        try:
            cls = DiseaseClass(int(cls_idx))
        except ValueError:
            raise DataError(f"detection line {lineno}: bad class index {cls_idx}") from None
        out.append(
            Detection(
                image_id=image_id,
                cls=cls,
                box=BBox(float(x0), float(y0), float(x1), float(y1)),
                confidence=float(conf),
            )
        )
    return out


def read_detections(path: Path | str) -> list[Detection]:
    return parse_detections(Path(path).read_bytes())


def write_detections(detections: Iterable[Detection], path: Path | str) -> None:
    with open(path, "w") as fh:
        for det in detections:
            b = det.box
            fh.write(
                f"{det.image_id} {int(det.cls)} {det.confidence:.6f} "
                f"{b.xmin:.2f} {b.ymin:.2f} {b.xmax:.2f} {b.ymax:.2f}\n"
            )


def write_eval_reports_csv(reports: Mapping[str, EvalReport], path: Path | str) -> None:
    """Classes-by-datasets AP table with a final mAP row."""
    names = list(reports)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class"] + names)
        for cls in DiseaseClass:
            if not any(cls in reports[n].per_class_ap for n in names):
                continue
            row = [cls.label]
            for name in names:
                ap = reports[name].per_class_ap.get(cls)
                row.append(f"{100.0 * ap:.2f}" if ap is not None else "")
            writer.writerow(row)
        writer.writerow(["mAP"] + [f"{100.0 * reports[n].mean_ap:.2f}" for n in names])


def write_eval_reports_json(reports: Mapping[str, EvalReport], path: Path | str) -> None:
    payload = {
        name: {
            "iou_threshold": rep.iou_threshold,
            "mAP": rep.mean_ap,
            "per_class": {
                cls.label: {
                    "AP": rep.per_class_ap.get(cls),
                    "TP": rep.counts[cls].tp,
                    "FP": rep.counts[cls].fp,
                    "FN": rep.counts[cls].fn,
                }
                for cls in sorted(rep.counts)
            },
        }
        for name, rep in reports.items()
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
