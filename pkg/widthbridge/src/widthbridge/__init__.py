"""Reference leaf-width regressor feeding the tiling toolkit via sidecar files."""

from .data import BridgeError, collect_samples, letterbox
from .predict import predict_widths
from .train import TrainingRun, build_model, train_width_model

__version__ = "0.1.0"
