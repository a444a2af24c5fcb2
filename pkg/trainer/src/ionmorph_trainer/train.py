"""Training loop: cross-entropy, class-weighted sampling, cosine restarts.

Keeps the checkpoint with the lowest validation loss and stops early once
that loss has not improved for `patience` epochs. Every epoch is appended
to a CSV log together with the learning rate in effect.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from .config import TrainConfig
from .data import IonImageDataset, LabeledImages, make_class_weighted_sampler
from .errors import DivergedLoss
from .model import TinyStructureNet


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    checkpoint_path: Path
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    stopped_early: bool = False


def _lr_at(epoch: int, config: TrainConfig) -> float:
    """Linear warmup, then cosine annealing with warm restarts."""
    if epoch < config.warmup_epochs:
        return config.lr_start * (epoch + 1) / config.warmup_epochs
    t = (epoch - config.warmup_epochs) % config.restart_period
    cos = 0.5 * (1.0 + math.cos(math.pi * t / config.restart_period))
    return config.lr_min + (config.lr_start - config.lr_min) * cos


def _seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def evaluate(model: nn.Module, loader: DataLoader) -> float:
    criterion = nn.CrossEntropyLoss()
    model.eval()
    total = 0.0
    count = 0
    with torch.no_grad():
        for x, y in loader:
            loss = criterion(model(x), y)
            total += float(loss) * len(y)
            count += len(y)
    return total / max(count, 1)


def train(
    config: TrainConfig,
    train_data: LabeledImages,
    val_data: LabeledImages,
    out_dir: str | Path,
) -> TrainResult:
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("train and val sets must be nonempty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _seed_everything(config.seed)

    train_ds = IonImageDataset(train_data, augment=config.augment, seed=config.seed)
    val_ds = IonImageDataset(val_data, augment=False)
    sampler = make_class_weighted_sampler(
        train_data.labels, num_samples=len(train_data), seed=config.seed
    )
    train_loader = DataLoader(train_ds, batch_size=config.batch_size, sampler=sampler)
    val_loader = DataLoader(val_ds, batch_size=config.batch_size)

    model = TinyStructureNet(dropout=config.dropout)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_start)
    criterion = nn.CrossEntropyLoss()

    result = TrainResult(checkpoint_path=out_dir / "best.pt")
    log_path = out_dir / "training_log.csv"
    since_best = 0
    with open(log_path, "w", newline="") as log_file:
        log = csv.writer(log_file)
        log.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for epoch in range(config.max_epochs):
            lr = _lr_at(epoch, config)
            for group in optimizer.param_groups:
                group["lr"] = lr
            model.train()
            total = 0.0
            count = 0
            for x, y in train_loader:
                optimizer.zero_grad()
                loss = criterion(model(x), y)
                if not torch.isfinite(loss):
                    raise DivergedLoss(
                        f"non-finite train loss at epoch {epoch}, lr {lr:g}, "
                        f"batch of {len(y)}"
                    )
                loss.backward()
                optimizer.step()
                total += float(loss.detach()) * len(y)
                count += len(y)
            train_loss = total / count
            val_loss = evaluate(model, val_loader)
            if not math.isfinite(val_loss):
                raise DivergedLoss(f"non-finite val loss at epoch {epoch}")
            log.writerow([epoch, f"{train_loss:.6f}", f"{val_loss:.6f}", f"{lr:.3e}"])
            result.history.append(EpochStats(epoch, train_loss, val_loss, lr))

            if val_loss < result.best_val_loss:
                result.best_val_loss = val_loss
                result.best_epoch = epoch
                since_best = 0
                torch.save(
                    {
                        "model_state": model.state_dict(),
                        "config": config.to_dict(),
                        "epoch": epoch,
                        "val_loss": val_loss,
                    },
                    result.checkpoint_path,
                )
            else:
                since_best += 1
                if since_best >= config.patience:
                    result.stopped_early = True
                    break
    return result


def load_checkpoint(path: str | Path) -> tuple[TinyStructureNet, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = TinyStructureNet(dropout=payload["config"]["dropout"])
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload
