"""Backbones that expose per-stage feature maps.

Two kinds are supported: a ResNet50 tapped at the outputs of its four
residual super-blocks (channels 256/512/1024/2048, spatial side halving
per stage), and a tiny stack of strided conv stages for tests and CPU-only
runs. Pretrained ResNet50 weights are loaded from a local state-dict file
when given; otherwise torchvision's default download path is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ConfigError

RESNET50 = "resnet50"
TOY_CNN = "toy_cnn"

RESNET50_STAGE_CHANNELS = (256, 512, 1024, 2048)


@dataclass(frozen=True)
class BackboneSpec:
    """Which backbone to build and where to tap it."""

    kind: str = RESNET50
    stage_channels: tuple[int, ...] = RESNET50_STAGE_CHANNELS
    pretrained: bool = True
    weights_path: str = ""

    def __post_init__(self):
        if self.kind not in (RESNET50, TOY_CNN):
            raise ConfigError(f"unknown backbone kind {self.kind!r}")
        if self.kind == RESNET50 and tuple(self.stage_channels) != RESNET50_STAGE_CHANNELS:
            raise ConfigError(
                f"resnet50 stages are fixed at {RESNET50_STAGE_CHANNELS}, "
                f"got {tuple(self.stage_channels)}"
            )
        if len(self.stage_channels) < 2:
            raise ConfigError("need at least 2 stages")

    @property
    def num_stages(self) -> int:
        return len(self.stage_channels)

    @classmethod
    def toy(cls, stage_channels: tuple[int, ...] = (8, 16)) -> "BackboneSpec":
        return cls(kind=TOY_CNN, stage_channels=tuple(stage_channels), pretrained=False)


class StageBackbone(nn.Module):
    """Wraps a backbone so forward() returns the list of stage feature maps."""

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        if spec.kind == RESNET50:
            self._build_resnet50(spec)
        else:
            self._build_toy(spec)

    def _build_resnet50(self, spec: BackboneSpec):
        from torchvision.models import resnet50

        net = resnet50(weights=None)
        if spec.pretrained:
            if spec.weights_path:
                state = torch.load(spec.weights_path, map_location="cpu", weights_only=True)
                net.load_state_dict(state)
            else:
                from torchvision.models import ResNet50_Weights

                net = resnet50(weights=ResNet50_Weights.IMAGENET1K_V1)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.stages = nn.ModuleList([net.layer1, net.layer2, net.layer3, net.layer4])

    def _build_toy(self, spec: BackboneSpec):
        self.stem = nn.Identity()
        stages = []
        in_ch = 3
        for out_ch in spec.stage_channels:
            stages.append(
                nn.Sequential(
                    nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1),
                    nn.ReLU(inplace=True),
                )
            )
            in_ch = out_ch
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected Bx3xHxW input, got {tuple(x.shape)}")
        maps = []
        out = self.stem(x)
        for stage in self.stages:
            out = stage(out)
            maps.append(out)
        return maps


def extract_stages(image_batch: torch.Tensor, backbone: StageBackbone) -> list[torch.Tensor]:
    """Per-stage feature maps for a batch, validated against the spec."""
    maps = backbone(image_batch)
    expected = backbone.spec.stage_channels
    got = tuple(m.shape[1] for m in maps)
    if got != tuple(expected):
        raise ValueError(f"stage channels {got} do not match spec {tuple(expected)}")
    return maps
