"""分割输出与损失相关的数据结构"""
from dataclasses import dataclass, field
from typing import List, Optional, Dict

import torch

from common.errors import NonFiniteError, OutOfRangeError
from model.entity.fusion import LatentPosterior


@dataclass
class SegmentationOutput:
    """逐像素置信度(softmax后) 与 argmax 标签图

    confidence: (B, C, H, W)；labels: (B, H, W)，并列时取最小类别号
    """
    confidence: torch.Tensor
    labels: torch.Tensor

    @classmethod
    def from_confidence(cls, confidence: torch.Tensor) -> 'SegmentationOutput':
        # torch.argmax 在并列时返回第一个最大值的下标
        return cls(confidence=confidence, labels=torch.argmax(confidence, dim=1))

    @classmethod
    def from_logits(cls, logits: torch.Tensor) -> 'SegmentationOutput':
        return cls.from_confidence(torch.softmax(logits, dim=1))

    @property
    def num_classes(self) -> int:
        return self.confidence.shape[1]

    def simplex_error(self) -> float:
        """每个像素置信度之和与1的最大偏差"""
        return float((self.confidence.sum(dim=1) - 1.0).abs().max())


@dataclass
class NetworkOutput:
    """一次完整前向：logits 及每层的后验和融合因子图"""
    logits: torch.Tensor
    posteriors: List[Optional[LatentPosterior]] = field(default_factory=list)
    factors: List[Optional[torch.Tensor]] = field(default_factory=list)

    def segmentation(self) -> SegmentationOutput:
        return SegmentationOutput.from_logits(self.logits)


@dataclass
class ClassWeights:
    """加权交叉熵的类别权重"""
    weights: torch.Tensor

    def __post_init__(self):
        if not torch.isfinite(self.weights).all():
            raise NonFiniteError("class weights must be finite")
        if not (self.weights > 0).all():
            raise OutOfRangeError("class weights must be positive")

    @classmethod
    def uniform(cls, num_classes: int, dtype=torch.float32) -> 'ClassWeights':
        return cls(torch.ones(num_classes, dtype=dtype))

    @property
    def num_classes(self) -> int:
        return self.weights.numel()

    def to(self, *args, **kwargs) -> 'ClassWeights':
        return ClassWeights(self.weights.to(*args, **kwargs))


@dataclass
class LossBreakdown:
    """total = wce + beta * kl_mean（均为batch平均）"""
    total: torch.Tensor
    wce: torch.Tensor
    kl_mean: torch.Tensor
    beta: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "total": float(self.total.detach()),
            "wce": float(self.wce.detach()),
            "kl_mean": float(self.kl_mean.detach()),
            "beta": float(self.beta),
        }
