"""Fine-tune an 18-layer residual backbone as a leaf-width regressor.

Loss is mean absolute error; the checkpoint kept is the one with the
best validation loss.  Three choices keep very short runs sane:

- the head regresses the standardized target (z-score of LW), so
  optimizer steps are scale-free; predictions are de-standardized with
  the train-set statistics stored in the checkpoint;
- the head starts at zero weights, i.e. exactly the predict-the-mean
  baseline, and can only improve along the data's gradient;
- BatchNorm layers run in eval mode throughout, so train-time and
  predict-time activations agree even before the running statistics
  have warmed up (their affine parameters still train).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import BridgeError, WidthDataset, collect_samples

log = logging.getLogger(__name__)


@dataclass
class TrainingRun:
    manifest_path: str
    width_table_path: str
    images_root: str
    out_dir: str
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 3e-3
    backbone_lr_scale: float = 0.1
    input_size: int = 224
    pretrained: bool = True
    seed: int = 0
    num_workers: int = 0

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.out_dir) / "width_model.pt"


def build_model(pretrained: bool) -> nn.Module:
    from torchvision.models import resnet18

    if pretrained:
        try:
            from torchvision.models import ResNet18_Weights

            model = resnet18(weights=ResNet18_Weights.IMAGENET1K_V1)
        except Exception as exc:  # no network / no cached weights
            log.warning("pretrained weights unavailable (%s); using random init", exc)
            model = resnet18(weights=None)
    else:
        model = resnet18(weights=None)
    model.fc = nn.Linear(model.fc.in_features, 1)
    return model


def _freeze_batchnorm(model: nn.Module) -> None:
    for module in model.modules():
        if isinstance(module, nn.modules.batchnorm._BatchNorm):
            module.eval()


def _val_mae_lw(model: nn.Module, loader: DataLoader, mean: float, std: float) -> float:
    model.eval()
    total, n = 0.0, 0
    with torch.no_grad():
        for x, y in loader:
            pred = model(x) * std + mean
            total += torch.abs(pred - y).sum().item()
            n += len(y)
    return total / max(n, 1)


def train_width_model(run: TrainingRun) -> Path:
    """Train and write the best-validation checkpoint; returns its path."""
    samples = collect_samples(run.manifest_path, run.width_table_path, run.images_root)
    train_samples = [s for s in samples if s.split == "train"]
    val_samples = [s for s in samples if s.split == "val"]
    if not train_samples:
        raise BridgeError("empty train split")
    if not val_samples:
        raise BridgeError("empty val split")

    torch.manual_seed(run.seed)
    model = build_model(run.pretrained)

    targets = torch.tensor([s.target_lw for s in train_samples])
    target_mean = float(targets.mean())
    target_std = max(float(targets.std(unbiased=False)), 1e-6)
    with torch.no_grad():
        model.fc.weight.zero_()
        model.fc.bias.zero_()

    generator = torch.Generator().manual_seed(run.seed)
    train_loader = DataLoader(
        WidthDataset(train_samples, run.input_size),
        batch_size=run.batch_size,
        shuffle=True,
        generator=generator,
        num_workers=run.num_workers,
    )
    val_loader = DataLoader(
        WidthDataset(val_samples, run.input_size),
        batch_size=run.batch_size,
        num_workers=run.num_workers,
    )

    criterion = nn.L1Loss()
    head_params = list(model.fc.parameters())
    head_ids = {id(p) for p in head_params}
    backbone_params = [p for p in model.parameters() if id(p) not in head_ids]
    optimizer = torch.optim.Adam(
        [
            {"params": head_params, "lr": run.learning_rate},
            {"params": backbone_params, "lr": run.learning_rate * run.backbone_lr_scale},
        ]
    )

    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_val = float("inf")
    for epoch in range(1, run.epochs + 1):
        model.train()
        _freeze_batchnorm(model)
        total, n = 0.0, 0
        for x, y in train_loader:
            optimizer.zero_grad()
            z = (y - target_mean) / target_std
            loss = criterion(model(x), z)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(y)
            n += len(y)
        train_mae_z = total / max(n, 1)
        val_mae = _val_mae_lw(model, val_loader, target_mean, target_std)
        log.info(
            "epoch %d/%d train_mae_z=%.4f val_mae=%.4f", epoch, run.epochs, train_mae_z, val_mae
        )
        if val_mae < best_val:
            best_val = val_mae
            torch.save(
                {
                    "state_dict": model.state_dict(),
                    "input_size": run.input_size,
                    "epoch": epoch,
                    "val_mae": val_mae,
                    "target_mean": target_mean,
                    "target_std": target_std,
                },
                run.checkpoint_path,
            )
    log.info("best val_mae=%.4f checkpoint=%s", best_val, run.checkpoint_path)
    return run.checkpoint_path
