"""Corpus width statistics and the narrow / normal / wide partition.

The partition follows the sample-proportion rule: the lowest 10% of
images by normalized leaf width form the narrow group, the highest 10%
the wide group, and the middle 80% the normal group.  The width-factor
score is the companion statistic; its inner term uses the signed
extension sign(x - mu) * sqrt(|x - mu|) so scores exist on both tails.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .annotations import DiseaseClass
from .errors import DataError

WidthEntry = tuple[str, Optional[DiseaseClass], float]  # (id, class, LW percent)


class SizeGroup(enum.Enum):
    NARROW = "narrow"
    NORMAL = "normal"
    WIDE = "wide"


@dataclass(frozen=True)
class WidthStats:
    n: int
    min: float
    max: float
    mean: float
    sd: float
    q1: float
    q2: float
    q3: float


@dataclass(frozen=True)
class LwfParams:
    """Parameters for the width-factor score, fitted on one corpus."""

    mu: float
    t_min: float
    samples: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.samples)


def _stats(values: np.ndarray) -> WidthStats:
    q1, q2, q3 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
    return WidthStats(
        n=int(values.size),
        min=float(values.min()),
        max=float(values.max()),
        mean=float(values.mean()),
        sd=float(values.std(ddof=0)),
        q1=float(q1),
        q2=float(q2),
        q3=float(q3),
    )


def compute_stats(
    entries: Sequence[WidthEntry],
) -> tuple[WidthStats, dict[DiseaseClass, WidthStats]]:
    """Order statistics of the width distribution, overall and per class."""
    if not entries:
        raise DataError("compute_stats: empty input")
    values = np.array([lw for _, _, lw in entries], dtype=np.float64)
    per_class: dict[DiseaseClass, WidthStats] = {}
    for cls in DiseaseClass:
        sub = np.array([lw for _, c, lw in entries if c == cls], dtype=np.float64)
        if sub.size:
            per_class[cls] = _stats(sub)
    return _stats(values), per_class


def signed_t(x: float, mu: float) -> float:
    """Signed square-root distance from the mean."""
    d = x - mu
    return math.copysign(math.sqrt(abs(d)), d) if d != 0 else 0.0


def fit_lwf_params(widths: Iterable[float]) -> LwfParams:
    values = tuple(widths)
    if not values:
        raise DataError("fit_lwf_params: empty input")
    mu = sum(values) / len(values)
    t_min = min(signed_t(v, mu) for v in values)
    return LwfParams(mu=mu, t_min=t_min, samples=values)


def lwf_score(x: float, params: LwfParams) -> float:
    """Width-factor score; zero at the corpus minimum, monotone in x.

    Valid for x drawn from the corpus the params were fitted on (so that
    the inner term never falls below t_min); tiny negative arguments from
    rounding are clamped.
    """
    inner = signed_t(x, params.mu) - params.t_min
    return math.sqrt(max(inner, 0.0))


def partition_by_quantile(
    entries: Sequence[WidthEntry],
    lower_frac: float = 0.10,
    upper_frac: float = 0.10,
) -> dict[str, SizeGroup]:
    """Assign each image to narrow / normal / wide by width rank.

    Group sizes are exactly floor(lower_frac*n) and floor(upper_frac*n);
    ties are broken by imageId so the output is permutation-invariant.
    """
    n = len(entries)
    if n < 10:
        raise DataError(f"partition needs at least 10 samples, got {n}")
    if not (0 < lower_frac < 1 and 0 < upper_frac < 1 and lower_frac + upper_frac < 1):
        raise DataError("partition fractions must be in (0, 1) and sum below 1")
    ranked = sorted(entries, key=lambda e: (e[2], e[0]))
    k_lo = int(math.floor(lower_frac * n))
    k_hi = int(math.floor(upper_frac * n))
    groups: dict[str, SizeGroup] = {}
    for i, (image_id, _, _) in enumerate(ranked):
        if i < k_lo:
            groups[image_id] = SizeGroup.NARROW
        elif i >= n - k_hi:
            groups[image_id] = SizeGroup.WIDE
        else:
            groups[image_id] = SizeGroup.NORMAL
    return groups


def summarize_partition(
    entries: Sequence[WidthEntry], groups: dict[str, SizeGroup]
) -> list[tuple[str, int, int, int]]:
    """Per-class group counts: rows (class, narrow, normal, wide)."""
    counts: dict[DiseaseClass, dict[SizeGroup, int]] = {}
    for image_id, cls, _ in entries:
        if cls is None:
            continue
        per = counts.setdefault(cls, {g: 0 for g in SizeGroup})
        per[groups[image_id]] += 1
    return [
        (
            cls.label,
            counts[cls][SizeGroup.NARROW],
            counts[cls][SizeGroup.NORMAL],
            counts[cls][SizeGroup.WIDE],
        )
        for cls in sorted(counts)
    ]


def write_partition(
    entries: Sequence[WidthEntry],
    groups: dict[str, SizeGroup],
    path: Path | str,
) -> None:
    rows = sorted(entries, key=lambda e: e[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class", "LW", "group"])
        for image_id, cls, lw in rows:
            writer.writerow(
                [
                    image_id,
                    cls.label if cls is not None else "",
                    f"{lw:.4f}",
                    groups[image_id].value,
                ]
            )


def write_partition_summary(
    entries: Sequence[WidthEntry], groups: dict[str, SizeGroup], path: Path | str
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "narrow", "normal", "wide"])
        for row in summarize_partition(entries, groups):
            writer.writerow(row)


def write_stats(
    overall: WidthStats,
    per_class: dict[DiseaseClass, WidthStats],
    path: Path | str,
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "n", "min", "max", "mean", "sd", "q1", "q2", "q3"])

        def fmt(name: str, s: WidthStats) -> list[str]:
            return [
                name,
                str(s.n),
                f"{s.min:.4f}",
                f"{s.max:.4f}",
                f"{s.mean:.4f}",
                f"{s.sd:.4f}",
                f"{s.q1:.4f}",
                f"{s.q2:.4f}",
                f"{s.q3:.4f}",
            ]

        for cls in sorted(per_class):
            writer.writerow(fmt(cls.label, per_class[cls]))
        writer.writerow(fmt("overall", overall))
