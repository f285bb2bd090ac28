"""Multi-scale feature extraction: project each stage map and concatenate.

Each backbone stage map is aligned to a common width by a 1x1 convolution
followed by global average pooling; the per-stage vectors are concatenated
in stage order into one fused feature vector of width n_stages * width.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .backbone import BackboneSpec, StageBackbone


@dataclass
class MultiScaleFeatures:
    """Per-stage pooled vectors plus their fused concatenation."""

    per_stage: list[torch.Tensor]
    fused: torch.Tensor

    def block(self, j: int) -> torch.Tensor:
        """Slice of the fused vector holding stage j (0-based)."""
        width = self.per_stage[j].shape[1]
        return self.fused[:, j * width : (j + 1) * width]


class ProjectAndPool(nn.Module):
    """1x1 conv to ``width`` channels, then spatial mean -> B x width."""

    def __init__(self, in_channels: int, width: int):
        super().__init__()
        if width < 1:
            raise ValueError(f"projection width must be >= 1, got {width}")
        self.proj = nn.Conv2d(in_channels, width, kernel_size=1)

    def forward(self, stage_map: torch.Tensor) -> torch.Tensor:
        return self.proj(stage_map).mean(dim=(2, 3))


def fuse(per_stage: list[torch.Tensor]) -> torch.Tensor:
    """Concatenate per-stage vectors in stage order along the feature dim."""
    if not per_stage:
        raise ValueError("nothing to fuse")
    batch = per_stage[0].shape[0]
    width = per_stage[0].shape[1]
    for j, vec in enumerate(per_stage):
        if vec.ndim != 2 or vec.shape[0] != batch or vec.shape[1] != width:
            raise ValueError(
                f"stage {j} has shape {tuple(vec.shape)}, expected ({batch}, {width})"
            )
    return torch.cat(per_stage, dim=1)


class MultiScaleExtractor(nn.Module):
    """Backbone stages -> per-stage projections -> fused feature vector."""

    def __init__(self, spec: BackboneSpec, projection_width: int):
        super().__init__()
        self.backbone = StageBackbone(spec)
        self.projections = nn.ModuleList(
            [ProjectAndPool(ch, projection_width) for ch in spec.stage_channels]
        )
        self.projection_width = projection_width

    @property
    def fused_width(self) -> int:
        return len(self.projections) * self.projection_width

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x).fused

    def features(self, x: torch.Tensor) -> MultiScaleFeatures:
        maps = self.backbone(x)
        per_stage = [proj(m) for proj, m in zip(self.projections, maps)]
        return MultiScaleFeatures(per_stage=per_stage, fused=fuse(per_stage))

    def freeze_backbone(self, frozen: bool = True):
        for param in self.backbone.parameters():
            param.requires_grad = not frozen
