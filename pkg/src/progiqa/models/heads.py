"""Prediction heads over the fused feature vector.

The score head is a 4-layer MLP (ReLU after the first three layers, linear
output, unclamped scalar). The quality-level head is a 3-layer MLP (ReLU
after the first two) producing K logits; probabilities come from a softmax
over those logits. Dropout, when enabled, follows each hidden activation.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ConfigError


@dataclass(frozen=True)
class HeadConfig:
    """Widths for both heads plus the number of quality levels."""

    input_width: int
    reg_widths: tuple[int, int, int] = (512, 256, 128)
    cls_widths: tuple[int, int] = (512, 256)
    num_levels: int = 5
    dropout: float = 0.1

    def __post_init__(self):
        if self.input_width < 1:
            raise ConfigError(f"input width must be >= 1, got {self.input_width}")
        if len(self.reg_widths) != 3 or any(w < 1 for w in self.reg_widths):
            raise ConfigError(f"need 3 positive regression widths, got {self.reg_widths}")
        if len(self.cls_widths) != 2 or any(w < 1 for w in self.cls_widths):
            raise ConfigError(f"need 2 positive classification widths, got {self.cls_widths}")
        if self.num_levels < 2:
            raise ConfigError(f"need at least 2 quality levels, got {self.num_levels}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


def _mlp(widths: list[int], dropout: float) -> nn.Sequential:
    """Affine layers with ReLU (+ optional dropout) between, linear at the end."""
    layers: list[nn.Module] = []
    for i in range(len(widths) - 1):
        layers.append(nn.Linear(widths[i], widths[i + 1]))
        if i < len(widths) - 2:
            layers.append(nn.ReLU(inplace=True))
            if dropout > 0:
                layers.append(nn.Dropout(dropout))
    return nn.Sequential(*layers)


class ScoreRegressionHead(nn.Module):
    """Fused features -> scalar quality score (B x 1, unclamped)."""

    def __init__(self, cfg: HeadConfig):
        super().__init__()
        self.net = _mlp([cfg.input_width, *cfg.reg_widths, 1], cfg.dropout)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.net(features)


class QualityLevelHead(nn.Module):
    """Fused features -> K quality-level logits (B x K)."""

    def __init__(self, cfg: HeadConfig):
        super().__init__()
        self.net = _mlp([cfg.input_width, *cfg.cls_widths, cfg.num_levels], cfg.dropout)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.net(features)

    def probabilities(self, features: torch.Tensor) -> torch.Tensor:
        """Row-softmax of the logits (max-subtracted, overflow-safe)."""
        return torch.softmax(self.forward(features), dim=1)


def linear_param_count(widths: list[int]) -> int:
    """Parameters of an MLP over the width sequence, biases included."""
    return sum((widths[i] + 1) * widths[i + 1] for i in range(len(widths) - 1))


def head_param_counts(cfg: HeadConfig) -> tuple[int, int]:
    """(regression, classification) parameter counts from layer arithmetic."""
    reg = linear_param_count([cfg.input_width, *cfg.reg_widths, 1])
    cls = linear_param_count([cfg.input_width, *cfg.cls_widths, cfg.num_levels])
    return reg, cls
