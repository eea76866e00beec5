"""融合模块相关的数据结构"""
from dataclasses import dataclass
from typing import Optional, Dict, Tuple

import torch

from common.errors import ShapeMismatchError
from model.enum import SampleMode

# exp() 之前对 log 方差的截断范围
LOG_VARIANCE_CLAMP = 40.0


@dataclass
class LatentPosterior:
    """潜变量Z的逐元素高斯后验，mean / log_variance 形状均为 (B, d, H, W)"""
    mean: torch.Tensor
    log_variance: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_variance.shape:
            raise ShapeMismatchError(
                f"posterior shape mismatch: mean {tuple(self.mean.shape)} vs log_variance {tuple(self.log_variance.shape)}"
            )

    @property
    def clamped_log_variance(self) -> torch.Tensor:
        return self.log_variance.clamp(-LOG_VARIANCE_CLAMP, LOG_VARIANCE_CLAMP)

    @property
    def variance(self) -> torch.Tensor:
        return torch.exp(self.clamped_log_variance)

    @property
    def std(self) -> torch.Tensor:
        return torch.exp(0.5 * self.clamped_log_variance)

    @property
    def latent_dim(self) -> int:
        return self.mean.shape[1]

    @property
    def spatial_shape(self) -> Tuple[int, int]:
        return tuple(self.mean.shape[-2:])

    def detach(self) -> 'LatentPosterior':
        return LatentPosterior(self.mean.detach(), self.log_variance.detach())

    def statistics(self) -> Dict[str, float]:
        """诊断用统计量（训练发散时写入诊断文件）"""
        stats = {}
        for key, tensor in (("mean", self.mean), ("log_variance", self.log_variance)):
            t = tensor.detach()
            finite = torch.isfinite(t)
            stats[f"{key}.nonfinite_fraction"] = float(1.0 - finite.double().mean())
            if finite.any():
                values = t[finite]
                stats[f"{key}.min"] = float(values.min())
                stats[f"{key}.max"] = float(values.max())
                stats[f"{key}.avg"] = float(values.double().mean())
        return stats


@dataclass
class LatentSample:
    """潜变量的一次取值"""
    values: torch.Tensor
    provenance: SampleMode
    seed: Optional[int] = None


@dataclass
class FusionResult:
    """单个VFFM的前向结果；加法融合时 posterior / factor 为 None"""
    fused: torch.Tensor
    posterior: Optional[LatentPosterior] = None
    factor: Optional[torch.Tensor] = None


@dataclass
class PixelConditionMap:
    """先验的条件：潜变量网格上的类别图 (B, H, W) 与每张图的光照 (B,)"""
    category: torch.Tensor
    illumination: torch.Tensor

    @property
    def spatial_shape(self) -> Tuple[int, int]:
        return tuple(self.category.shape[-2:])
