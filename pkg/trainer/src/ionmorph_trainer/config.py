"""Training configuration with the published recipe as defaults.

Every field can be overridden; the effective values are logged alongside
the training run so a nonstandard setting is always visible.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr_start: float = 3e-5
    lr_min: float = 1e-6
    warmup_epochs: int = 8
    restart_period: int = 10
    dropout: float = 0.05
    patience: int = 10
    max_epochs: int = 100
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr_min > self.lr_start:
            raise ValueError("lr_min must not exceed lr_start")
        if self.patience < 1 or self.max_epochs < 1:
            raise ValueError("patience and max_epochs must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
