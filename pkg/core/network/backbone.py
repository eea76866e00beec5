"""编码器骨干网络

两种变体都输出 5 层特征，累计步长 2, 4, 8, 16, 32：
- tiny: 每层一个 stride-2 卷积 + BN + LeakyReLU，再接一个残差块
- resnet50: 与 ResNet-50 相同的通道/步长布局（瓶颈块），无池化与全连接层
"""
from typing import List, Sequence

import torch
from torch import nn

from common.errors import ConfigError
from model.enum import BackboneVariant

TINY_CHANNELS = (16, 32, 64, 128, 256)
RESNET50_CHANNELS = (64, 256, 512, 1024, 2048)
RESNET50_BLOCKS = (3, 4, 6, 3)
NEGATIVE_SLOPE = 0.2


def conv_bn_act(in_channels: int, out_channels: int, kernel_size: int = 3, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size, stride=stride, padding=kernel_size // 2, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.LeakyReLU(NEGATIVE_SLOPE),
    )


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(channels),
            nn.LeakyReLU(NEGATIVE_SLOPE),
            nn.Conv2d(channels, channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(channels),
        )
        self.act = nn.LeakyReLU(NEGATIVE_SLOPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(x + self.body(x))


class Bottleneck(nn.Module):
    """1×1 降维 → 3×3 → 1×1 升维，stride 放在 3×3 上"""
    expansion = 4

    def __init__(self, in_channels: int, width: int, stride: int = 1):
        super().__init__()
        out_channels = width * self.expansion
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, width, 1, bias=False),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, stride=stride, padding=1, bias=False),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, out_channels, 1, bias=False),
            nn.BatchNorm2d(out_channels),
        )
        self.shortcut = nn.Identity()
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.body(x) + self.shortcut(x))


class Backbone(nn.Module):
    """5 个 stage 依次执行，返回每个 stage 的输出"""

    def __init__(self, stages: Sequence[nn.Module], channels: Sequence[int]):
        super().__init__()
        if len(stages) != 5 or len(channels) != 5:
            raise ConfigError("backbone must have exactly 5 stages")
        self.stages = nn.ModuleList(stages)
        self.channels: List[int] = list(channels)
        self.strides: List[int] = [2 ** (i + 1) for i in range(5)]

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features


def tiny_backbone(in_channels: int = 3, channels: Sequence[int] = TINY_CHANNELS) -> Backbone:
    stages = []
    previous = in_channels
    for width in channels:
        stages.append(nn.Sequential(conv_bn_act(previous, width, stride=2), ResidualBlock(width)))
        previous = width
    return Backbone(stages, channels)


def resnet50_backbone(in_channels: int = 3) -> Backbone:
    stem = nn.Sequential(
        nn.Conv2d(in_channels, 64, 7, stride=2, padding=3, bias=False),
        nn.BatchNorm2d(64),
        nn.ReLU(inplace=True),
    )
    stages = [stem]
    previous = 64
    for index, (blocks, out_channels) in enumerate(zip(RESNET50_BLOCKS, RESNET50_CHANNELS[1:])):
        width = out_channels // Bottleneck.expansion
        layers: List[nn.Module] = []
        if index == 0:
            layers.append(nn.MaxPool2d(3, stride=2, padding=1))
        for block in range(blocks):
            stride = 2 if (block == 0 and index > 0) else 1
            layers.append(Bottleneck(previous, width, stride=stride))
            previous = out_channels
        stages.append(nn.Sequential(*layers))
    return Backbone(stages, RESNET50_CHANNELS)


def build_backbone(variant: BackboneVariant, in_channels: int = 3) -> Backbone:
    variant = BackboneVariant.parse(variant)
    if variant == BackboneVariant.TINY:
        return tiny_backbone(in_channels)
    return resnet50_backbone(in_channels)
