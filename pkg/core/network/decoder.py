"""跳连解码器：5 个 2× 转置卷积上采样块 + 1×1 分类卷积"""
from typing import Sequence

import torch
from torch import nn
import torch.nn.functional as F

from common.errors import ShapeMismatchError
from core.network.backbone import NEGATIVE_SLOPE


class UpsampleBlock(nn.Sequential):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__(
            nn.ConvTranspose2d(in_channels, out_channels, kernel_size=2, stride=2, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.LeakyReLU(NEGATIVE_SLOPE),
        )


class SkipDecoder(nn.Module):
    """从第 4 层开始逐级上采样，每次上采样后加上低一层的融合特征

    块 i 的输出通道等于第 i−1 层的通道数，相加无需投影。
    skip0_after_final_upsample 为 True 时，第 0 层特征改为在最后一次上采样后
    (最近邻放大 2 倍) 再相加。
    """

    def __init__(self, channels: Sequence[int], num_classes: int, skip0_after_final_upsample: bool = False):
        super().__init__()
        self.channels = list(channels)
        self.num_classes = num_classes
        self.skip0_after_final_upsample = skip0_after_final_upsample
        c = self.channels
        # 4→3, 3→2, 2→1, 1→0, 0→全分辨率
        self.blocks = nn.ModuleList(
            [UpsampleBlock(c[i], c[i - 1]) for i in range(4, 0, -1)] + [UpsampleBlock(c[0], c[0])]
        )
        self.classifier = nn.Conv2d(c[0], num_classes, kernel_size=1)

    def forward(self, pyramid: Sequence[torch.Tensor]) -> torch.Tensor:
        if len(pyramid) != 5:
            raise ShapeMismatchError(f"decoder expects 5 feature levels, got {len(pyramid)}")
        for level, (feature, expected) in enumerate(zip(pyramid, self.channels)):
            if feature.shape[1] != expected:
                raise ShapeMismatchError(
                    f"decoder channel mismatch at level {level}: expected {expected}, got {feature.shape[1]}"
                )

        x = pyramid[4]
        for step, block in enumerate(self.blocks[:4]):
            x = block(x)
            skip_level = 3 - step
            if skip_level > 0 or not self.skip0_after_final_upsample:
                x = x + pyramid[skip_level]
        x = self.blocks[4](x)
        if self.skip0_after_final_upsample:
            x = x + F.interpolate(pyramid[0], scale_factor=2, mode="nearest")
        return self.classifier(x)
