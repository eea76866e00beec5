"""图像/标签缩放与训练增强

几何变换对 rgb、thermal、label 完全一致：图像双线性插值，标签最近邻。
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from model.entity import SamplePair


def resize_image(image: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """(C, H, W) 双线性缩放，结果截断到 [0,1]"""
    if tuple(image.shape[-2:]) == tuple(size):
        return image
    resized = F.interpolate(image.unsqueeze(0), size=tuple(size), mode="bilinear", align_corners=False)
    return resized.squeeze(0).clamp(0.0, 1.0)


def resize_label(label: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """(H, W) 最近邻缩放，不产生新的类别值"""
    if tuple(label.shape[-2:]) == tuple(size):
        return label
    resized = F.interpolate(label[None, None].double(), size=tuple(size), mode="nearest")
    return resized[0, 0].round().to(label.dtype)


def resize_sample(sample: SamplePair, size: Optional[Tuple[int, int]]) -> SamplePair:
    if size is None or tuple(size) == sample.shape:
        return sample
    return sample.with_arrays(
        rgb=resize_image(sample.rgb, size),
        thermal=resize_image(sample.thermal, size),
        label=resize_label(sample.label, size),
    )


@dataclass(frozen=True)
class CropWindow:
    top: int
    left: int
    height: int
    width: int

    def inside(self, shape: Tuple[int, int]) -> bool:
        return (0 <= self.top and 0 <= self.left and self.height >= 1 and self.width >= 1
                and self.top + self.height <= shape[0] and self.left + self.width <= shape[1])


@dataclass(frozen=True)
class AugmentParams:
    flip: bool
    crop: CropWindow


def sample_augmentation(shape: Tuple[int, int], seed: int, flip_prob: float = 0.5,
                        crop_fraction: float = 0.9) -> AugmentParams:
    """由 seed 确定的增强参数：是否水平翻转以及裁剪窗口"""
    rng = np.random.default_rng(seed)
    height, width = shape
    flip = bool(rng.random() < flip_prob)
    crop_h = min(height, max(1, int(round(height * crop_fraction))))
    crop_w = min(width, max(1, int(round(width * crop_fraction))))
    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))
    return AugmentParams(flip=flip, crop=CropWindow(top, left, crop_h, crop_w))


def apply_augmentation(sample: SamplePair, params: AugmentParams) -> SamplePair:
    rgb, thermal, label = sample.rgb, sample.thermal, sample.label
    if params.flip:
        rgb, thermal, label = rgb.flip(-1), thermal.flip(-1), label.flip(-1)
    shape = tuple(label.shape)
    window = params.crop
    if (window.height, window.width) != shape:
        rows = slice(window.top, window.top + window.height)
        cols = slice(window.left, window.left + window.width)
        rgb = resize_image(rgb[:, rows, cols], shape)
        thermal = resize_image(thermal[:, rows, cols], shape)
        label = resize_label(label[rows, cols], shape)
    return sample.with_arrays(rgb=rgb, thermal=thermal, label=label)


def augment(sample: SamplePair, seed: int, flip_prob: float = 0.5, crop_fraction: float = 0.9) -> SamplePair:
    """随机水平翻转 + 随机裁剪后缩放回原尺寸，仅用于训练集"""
    return apply_augmentation(sample, sample_augmentation(sample.shape, seed, flip_prob, crop_fraction))
