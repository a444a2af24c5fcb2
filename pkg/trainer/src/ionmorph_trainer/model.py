"""Small convolutional backbone for the six-class structure classifier.

The default backbone is deliberately tiny so desk-scale smoke runs finish
in seconds on a CPU; it is strided convs plus global average pooling, which
maps one to one onto the exported inference graph.
"""

from __future__ import annotations

import torch
from torch import nn

from ionmorph.classes import NUM_CLASSES


class TinyStructureNet(nn.Module):
    def __init__(self, dropout: float = 0.05, width: int = 8):
        super().__init__()
        self.conv1 = nn.Conv2d(1, width, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(width, width * 2, kernel_size=3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(width * 2, width * 4, kernel_size=3, stride=2, padding=1)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.dropout = nn.Dropout(dropout)
        self.head = nn.Linear(width * 4, NUM_CLASSES)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        x = torch.relu(self.conv3(x))
        x = torch.flatten(self.pool(x), 1)
        return self.head(self.dropout(x))
