"""Pipeline configuration: JSON config file plus flag overrides (flags win)."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError
from .tiler import EdgePolicy
from .width_estimation import WidthPolicy

CONFIG_ENV_VAR = "LEAFTILE_CONFIG"


@dataclass
class PipelineConfig:
    corpus_root: str = "."
    annotation_glob: str = "annotations/*.json"
    images_root: str | None = None  # defaults to corpus_root
    output_root: str = "out"
    n_values: tuple[int, ...] = (3, 5, 7)
    overlap_fraction: float = 0.5
    min_area_ratio: float = 0.07
    edge_policy: str = EdgePolicy.CLAMP_SHIFT.value
    min_window: int = 64
    min_component_pixels: int = 16
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    width_policy: str = WidthPolicy.GROUND_TRUTH_FIRST.value
    sidecar: str | None = None
    keep_negatives: bool = False
    iou_threshold: float = 0.5
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.n_values:
            raise UsageError("n_values must be non-empty")
        self.n_values = tuple(int(n) for n in self.n_values)
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        try:
            EdgePolicy(self.edge_policy)
        except ValueError:
            raise UsageError(f"unknown edge policy {self.edge_policy!r}") from None
        try:
            WidthPolicy(self.width_policy)
        except ValueError:
            raise UsageError(f"unknown width policy {self.width_policy!r}") from None
        if self.jobs < 1:
            raise UsageError("jobs must be >= 1")

    @property
    def edge_policy_enum(self) -> EdgePolicy:
        return EdgePolicy(self.edge_policy)

    @property
    def width_policy_enum(self) -> WidthPolicy:
        return WidthPolicy(self.width_policy)

    @classmethod
    def from_file(cls, path: Path | str) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, explicit_path: str | None) -> "PipelineConfig":
        """Explicit --config path, else $LEAFTILE_CONFIG, else defaults."""
        path = explicit_path or os.environ.get(CONFIG_ENV_VAR)
        if path:
            return cls.from_file(path)
        return cls()

    def override(self, **kwargs) -> "PipelineConfig":
        """New config with every non-None kwarg applied."""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return dataclasses.replace(self, **updates)
