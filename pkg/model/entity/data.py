"""数据集相关的数据结构"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import torch

from common.errors import ShapeMismatchError, OutOfRangeError, NonFiniteError
from model.enum import Illumination, DatasetKind

SPLITS = ("train", "val", "test")


@dataclass
class SamplePair:
    """一对对齐的RGB/热红外图像及其标签

    rgb: (3, H, W) float ∈ [0,1]；thermal: (1, H, W) float ∈ [0,1]；label: (H, W) int64
    """
    rgb: torch.Tensor
    thermal: torch.Tensor
    label: torch.Tensor
    illumination: Illumination
    id: str

    def validate(self, num_classes: int) -> 'SamplePair':
        h, w = self.label.shape
        if self.rgb.shape != (3, h, w) or self.thermal.shape != (1, h, w):
            raise ShapeMismatchError(
                f"sample {self.id}: rgb {tuple(self.rgb.shape)}, thermal {tuple(self.thermal.shape)}, "
                f"label {tuple(self.label.shape)} do not agree"
            )
        for name, image in (("rgb", self.rgb), ("thermal", self.thermal)):
            if not torch.isfinite(image).all():
                raise NonFiniteError(f"sample {self.id}: non-finite {name} values")
            if image.min() < 0 or image.max() > 1:
                raise OutOfRangeError(f"sample {self.id}: {name} values outside [0,1]")
        if self.label.numel() and (self.label.min() < 0 or self.label.max() >= num_classes):
            raise OutOfRangeError(f"label out of range in sample {self.id} (C={num_classes})")
        return self

    def with_arrays(self, rgb=None, thermal=None, label=None) -> 'SamplePair':
        return replace(
            self,
            rgb=self.rgb if rgb is None else rgb,
            thermal=self.thermal if thermal is None else thermal,
            label=self.label if label is None else label,
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.label.shape)


@dataclass
class DatasetSpec:
    """规范化数据集目录描述

    目录布局: root/{rgb,thermal,labels}/<id>.png，root/{train,val,test}.txt，
    root/illumination.txt（每行 "<id> day|night"）
    """
    root: Path
    num_classes: int
    class_names: List[str] = field(default_factory=list)
    resize: Optional[Tuple[int, int]] = None
    kind: DatasetKind = DatasetKind.SYNTHETIC

    def __post_init__(self):
        self.root = Path(self.root)
        if not self.class_names:
            self.class_names = [f"class{c}" for c in range(self.num_classes)]

    def manifest_path(self, split: str) -> Path:
        return self.root / f"{split}.txt"

    @property
    def illumination_path(self) -> Path:
        return self.root / "illumination.txt"

    def rgb_path(self, sample_id: str) -> Path:
        return self.root / "rgb" / f"{sample_id}.png"

    def thermal_path(self, sample_id: str) -> Path:
        return self.root / "thermal" / f"{sample_id}.png"

    def label_path(self, sample_id: str) -> Path:
        return self.root / "labels" / f"{sample_id}.png"
