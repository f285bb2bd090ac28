"""Full model assembly and the four ablation variants.

The full model composes the multi-scale extractor with both heads. The
ablation variants are:

  backbone_only    last backbone stage, global-average-pooled, into a plain
                   MLP regressor (no multi-scale taps, no level head)
  multiscale_only  multi-scale extractor + regression head only
  fixed_weights    full architecture trained with constant 0.5/0.5 weights
  progressive      full architecture with the ramped weight schedule

``equalize_variant_config`` rescales a variant's hidden widths so its total
parameter count lands within a tolerance band of the full model's, removing
model capacity as a confound when comparing variants.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import torch
from torch import nn

from ..errors import ConfigError
from .backbone import BackboneSpec, StageBackbone
from .extractor import MultiScaleExtractor
from .heads import (
    HeadConfig,
    QualityLevelHead,
    ScoreRegressionHead,
    linear_param_count,
)

BACKBONE_ONLY = "backbone_only"
MULTISCALE_ONLY = "multiscale_only"
FIXED_WEIGHTS = "fixed_weights"
PROGRESSIVE = "progressive"
VARIANTS = (BACKBONE_ONLY, MULTISCALE_ONLY, FIXED_WEIGHTS, PROGRESSIVE)

# Variants whose loss uses the quality-level head.
_TWO_HEAD_VARIANTS = (FIXED_WEIGHTS, PROGRESSIVE)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for the full model."""

    backbone: BackboneSpec
    projection_width: int = 256
    reg_widths: tuple[int, int, int] = (512, 256, 128)
    cls_widths: tuple[int, int] = (512, 256)
    num_levels: int = 5
    dropout: float = 0.1
    freeze_backbone: bool = False

    @property
    def fused_width(self) -> int:
        return self.backbone.num_stages * self.projection_width


class LastStagePool(nn.Module):
    """Backbone's final stage map, global-average-pooled to a vector."""

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.backbone = StageBackbone(spec)
        self.out_width = spec.stage_channels[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)[-1].mean(dim=(2, 3))

    def freeze_backbone(self, frozen: bool = True):
        for param in self.backbone.parameters():
            param.requires_grad = not frozen


class QualityModel(nn.Module):
    """Feature extractor plus score head and (optionally) level head."""

    def __init__(self, cfg: ModelConfig, variant: str = PROGRESSIVE):
        super().__init__()
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.cfg = cfg
        self.variant = variant

        if variant == BACKBONE_ONLY:
            self.extractor: nn.Module = LastStagePool(cfg.backbone)
            feature_width = cfg.backbone.stage_channels[-1]
        else:
            self.extractor = MultiScaleExtractor(cfg.backbone, cfg.projection_width)
            feature_width = cfg.fused_width

        head_cfg = HeadConfig(
            input_width=feature_width,
            reg_widths=cfg.reg_widths,
            cls_widths=cfg.cls_widths,
            num_levels=cfg.num_levels,
            dropout=cfg.dropout,
        )
        self.score_head = ScoreRegressionHead(head_cfg)
        self.level_head = (
            QualityLevelHead(head_cfg) if variant in _TWO_HEAD_VARIANTS else None
        )
        if cfg.freeze_backbone:
            self.extractor.freeze_backbone(True)

    @property
    def has_level_head(self) -> bool:
        return self.level_head is not None

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None]:
        features = self.extractor(x)
        score = self.score_head(features)
        logits = self.level_head(features) if self.level_head is not None else None
        return score, logits

    def predict_scores(self, x: torch.Tensor) -> torch.Tensor:
        """Inference-path scalar scores (level head ignored), shape (B,)."""
        return self.forward(x)[0].squeeze(1)


def build_model(cfg: ModelConfig, variant: str = PROGRESSIVE) -> QualityModel:
    return QualityModel(cfg, variant)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


@lru_cache(maxsize=None)
def _backbone_param_count_cached(kind: str, stage_channels: tuple[int, ...]) -> int:
    probe = BackboneSpec(kind=kind, stage_channels=stage_channels, pretrained=False)
    return count_parameters(StageBackbone(probe))


def _backbone_param_count(spec: BackboneSpec) -> int:
    # Instantiate without weights purely to count; cached since the count
    # only depends on the geometry.
    return _backbone_param_count_cached(spec.kind, tuple(spec.stage_channels))


def _projection_param_count(spec: BackboneSpec, width: int) -> int:
    return sum(width * (ch + 1) for ch in spec.stage_channels)


def variant_param_count(cfg: ModelConfig, variant: str, backbone_params: int | None = None) -> int:
    """Total parameter count of a variant from layer arithmetic."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if backbone_params is None:
        backbone_params = _backbone_param_count(cfg.backbone)
    if variant == BACKBONE_ONLY:
        width_in = cfg.backbone.stage_channels[-1]
        return backbone_params + linear_param_count([width_in, *cfg.reg_widths, 1])
    total = backbone_params + _projection_param_count(cfg.backbone, cfg.projection_width)
    total += linear_param_count([cfg.fused_width, *cfg.reg_widths, 1])
    if variant in _TWO_HEAD_VARIANTS:
        total += linear_param_count([cfg.fused_width, *cfg.cls_widths, cfg.num_levels])
    return total


def _scaled(widths: tuple[int, ...], factor: float) -> tuple[int, ...]:
    return tuple(max(1, round(w * factor)) for w in widths)


def equalize_variant_config(
    cfg: ModelConfig, variant: str, tolerance: float = 0.10
) -> ModelConfig:
    """Rescale a variant's head widths to match the full model's size.

    Returns a config whose variant_param_count lies within ``tolerance`` of
    the progressive variant's count, found by bisecting a width multiplier
    applied to the regression-head widths. Raises ConfigError, including the
    closest widths found, when no multiplier reaches the band.
    """
    backbone_params = _backbone_param_count(cfg.backbone)
    target = variant_param_count(cfg, PROGRESSIVE, backbone_params)
    if variant in _TWO_HEAD_VARIANTS:
        return cfg

    def count_for(factor: float) -> tuple[int, ModelConfig]:
        candidate = replace(cfg, reg_widths=_scaled(cfg.reg_widths, factor))
        return variant_param_count(candidate, variant, backbone_params), candidate

    lo, hi = 1e-3, 1e4
    best_count, best_cfg = count_for(1.0)
    for _ in range(80):
        mid = (lo * hi) ** 0.5
        count, candidate = count_for(mid)
        if abs(count - target) < abs(best_count - target):
            best_count, best_cfg = count, candidate
        if count < target:
            lo = mid
        else:
            hi = mid

    if abs(best_count - target) > tolerance * target:
        raise ConfigError(
            f"cannot match {variant} to {target} parameters within "
            f"{tolerance:.0%}; closest was {best_count} with reg_widths="
            f"{best_cfg.reg_widths}"
        )
    return best_cfg
