"""分割损失

- compute_class_weights: w_c = 1 / ln(k + p_c)
- weighted_cross_entropy: 按权重和归一化的加权交叉熵，每张图一个值
- total_loss: batch 平均的 WCE + β · (各层 KL 的平均)
"""
from typing import Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F

from common.errors import DataError, ShapeMismatchError, ConfigError
from common.validators import check_labels
from core.prior.gmm_prior import GaussianMixturePrior, conditional_kl, downsample_labels
from model.entity import ClassWeights, LatentPosterior, LossBreakdown, PixelConditionMap

DEFAULT_WEIGHT_CONSTANT = 1.02
NUM_LEVELS = 5


def compute_class_weights(histogram: Union[Sequence[int], np.ndarray, torch.Tensor],
                          k: float = DEFAULT_WEIGHT_CONSTANT,
                          dtype: torch.dtype = torch.float32) -> ClassWeights:
    """由训练集标签直方图计算类别权重，计数为 0 的类别取 1/ln(k)"""
    if k <= 1.0:
        raise ConfigError(f"class weight constant must be > 1, got {k}")
    counts = torch.as_tensor(np.asarray(histogram, dtype=np.float64))
    if counts.dim() != 1 or counts.numel() == 0:
        raise DataError("label histogram must be a non-empty vector")
    if (counts < 0).any():
        raise DataError("label histogram has negative counts")
    total = counts.sum()
    if total <= 0:
        raise DataError("label histogram is all zero")
    proportions = counts / total
    weights = 1.0 / torch.log(k + proportions)
    return ClassWeights(weights.to(dtype))


def weighted_cross_entropy(logits: torch.Tensor, labels: torch.Tensor,
                           weights: Optional[ClassWeights] = None) -> torch.Tensor:
    """logits (B, C, H, W)，labels (B, H, W)，返回每张图的加权平均交叉熵 (B,)"""
    if logits.dim() != 4 or labels.shape != (logits.shape[0],) + tuple(logits.shape[2:]):
        raise ShapeMismatchError(
            f"logits {tuple(logits.shape)} and labels {tuple(labels.shape)} are not aligned"
        )
    num_classes = logits.shape[1]
    check_labels(labels, num_classes)
    if weights is None:
        weights = ClassWeights.uniform(num_classes, dtype=logits.dtype)
    if weights.num_classes != num_classes:
        raise ShapeMismatchError(f"{weights.num_classes} class weights for {num_classes} classes")

    labels = labels.long()
    nll = -F.log_softmax(logits, dim=1).gather(1, labels.unsqueeze(1)).squeeze(1)
    pixel_weights = weights.weights.to(device=logits.device, dtype=logits.dtype)[labels]
    return (pixel_weights * nll).flatten(1).sum(dim=1) / pixel_weights.flatten(1).sum(dim=1)


def level_kl(posteriors: Sequence[LatentPosterior], labels: torch.Tensor,
             illumination: torch.Tensor, prior: GaussianMixturePrior) -> torch.Tensor:
    """各层 KL 的平均，标签按每层潜变量网格最近邻下采样，返回 (B,)"""
    per_level = []
    for posterior in posteriors:
        category = downsample_labels(labels, posterior.spatial_shape)
        per_level.append(conditional_kl(posterior, PixelConditionMap(category, illumination), prior))
    return torch.stack(per_level, dim=0).mean(dim=0)


def total_loss(logits: torch.Tensor, labels: torch.Tensor,
               posteriors: Optional[Sequence[Optional[LatentPosterior]]],
               illumination: torch.Tensor,
               prior: Optional[GaussianMixturePrior],
               weights: Optional[ClassWeights] = None,
               beta: float = 0.5,
               num_levels: int = NUM_LEVELS) -> LossBreakdown:
    """total = mean_b[ WCE_b + β · mean_levels KL_b ]

    β = 0 时若后验齐全仍计算 kl_mean 用于记录；β > 0 时缺少任意一层后验即报错
    """
    if beta < 0:
        raise ConfigError(f"beta must be >= 0, got {beta}")
    wce_per_image = weighted_cross_entropy(logits, labels, weights)

    complete = (posteriors is not None and len(posteriors) == num_levels
                and all(p is not None for p in posteriors))
    if beta > 0 and (not complete or prior is None):
        raise DataError("missing level posterior",
                        levels=0 if posteriors is None else sum(p is not None for p in posteriors),
                        has_prior=prior is not None)

    if complete and prior is not None:
        kl_per_image = level_kl(posteriors, labels, illumination, prior)
    else:
        kl_per_image = torch.zeros_like(wce_per_image)

    wce = wce_per_image.mean()
    kl_mean = kl_per_image.mean()
    total = (wce_per_image + beta * kl_per_image).mean()
    return LossBreakdown(total=total, wce=wce, kl_mean=kl_mean, beta=float(beta))
