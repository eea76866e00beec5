#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
互补模态合成数据集生成器

构造方式保证单一模态无法区分全部类别：
- 奇数类别只绘制在热红外通道（RGB 在该处仍是背景纹理）
- 非零偶数类别只绘制在 RGB（热红外保持平坦背景）
- 夜间图像 RGB 对比度降为 1/5 并叠加噪声
- 背景像素占比不低于 70%，用于检验加权交叉熵
"""
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import torch

from common.errors import ConfigError, DataError
from common.io import write_uint8, to_unit_tensor
from common.log import Logger
from model.entity import SamplePair, SPLITS
from model.enum import Illumination

_log = Logger()
logger = _log.get_logger()

THERMAL_BACKGROUND = 0.2
MAX_FOREGROUND_FRACTION = 0.3


@dataclass
class GeneratorConfig:
    """合成数据集参数"""
    size: Tuple[int, int] = (64, 64)
    n_samples: int = 800
    num_classes: int = 4
    seed: int = 0
    split_fractions: Tuple[float, float, float] = (0.75, 0.125, 0.125)
    night_fraction: float = 0.5
    night_contrast: float = 5.0
    night_noise: float = 0.03
    max_shapes: int = 4

    def validate(self) -> 'GeneratorConfig':
        if self.num_classes < 3:
            raise ConfigError(f"synthetic generation needs at least 3 classes, got {self.num_classes}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if any(s < 8 for s in self.size):
            raise ConfigError(f"image size {self.size} is too small")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or any(f < 0 for f in self.split_fractions):
            raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {self.split_fractions}")
        if not 0.0 <= self.night_fraction <= 1.0:
            raise ConfigError("night_fraction must be in [0, 1]")
        if self.night_contrast < 1.0:
            raise ConfigError("night_contrast must be >= 1")
        return self


@dataclass
class GenerationReport:
    root: Path
    split_counts: Dict[str, int]
    histogram: np.ndarray
    night_count: int = 0
    ids: List[str] = field(default_factory=list)

    @property
    def background_fraction(self) -> float:
        return float(self.histogram[0] / self.histogram.sum())


def _palette(num_classes: int) -> Dict[int, np.ndarray]:
    """RGB 类别 (非零偶数) 的颜色，取色相环上的等距点"""
    classes = [c for c in range(2, num_classes, 2)]
    colors = {}
    for rank, c in enumerate(classes):
        angle = 2.0 * np.pi * rank / max(1, len(classes))
        colors[c] = 0.5 + 0.45 * np.array([np.cos(angle), np.cos(angle - 2.094), np.cos(angle + 2.094)])
    return colors


def _thermal_levels(num_classes: int) -> Dict[int, float]:
    """热红外类别 (奇数) 的亮度，均匀分布在 [0.45, 0.95]"""
    classes = [c for c in range(1, num_classes, 2)]
    if len(classes) == 1:
        return {classes[0]: 0.8}
    return {c: 0.45 + 0.5 * rank / (len(classes) - 1) for rank, c in enumerate(classes)}


class SyntheticDatasetGenerator:
    """按 seed 确定性地生成互补模态数据集"""

    def __init__(self, config: GeneratorConfig):
        self.config = config.validate()
        self.colors = _palette(config.num_classes)
        self.thermal_levels = _thermal_levels(config.num_classes)

    def sample_ids(self) -> List[str]:
        return [f"{index:05d}" for index in range(self.config.n_samples)]

    def _render_arrays(self, index: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Illumination]:
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, index])
        height, width = cfg.size
        rows, cols = np.mgrid[0:height, 0:width]

        label = np.zeros((height, width), dtype=np.int64)
        min_radius = max(2, min(height, width) // 16)
        max_radius = max(min_radius + 1, min(height, width) // 8)
        for _ in range(int(rng.integers(1, cfg.max_shapes + 1))):
            c = int(rng.integers(1, cfg.num_classes))
            cy, cx = rng.integers(0, height), rng.integers(0, width)
            radius = int(rng.integers(min_radius, max_radius + 1))
            if rng.random() < 0.5:
                mask = (rows - cy) ** 2 + (cols - cx) ** 2 <= radius ** 2
            else:
                mask = (np.abs(rows - cy) <= radius) & (np.abs(cols - cx) <= radius)
            candidate = label.copy()
            candidate[mask] = c
            if np.mean(candidate > 0) <= MAX_FOREGROUND_FRACTION:
                label = candidate

        # RGB 背景：低频条纹 + 弱噪声
        phase = rng.uniform(0, 2 * np.pi)
        frequency = rng.uniform(0.1, 0.3)
        base = 0.45 + 0.12 * np.sin(frequency * (rows + cols) + phase)
        rgb = np.repeat(base[:, :, None], 3, axis=2) + rng.normal(0.0, 0.02, (height, width, 3))
        for c, color in self.colors.items():
            rgb[label == c] = color + rng.normal(0.0, 0.02, (int(np.sum(label == c)), 3))

        thermal = np.full((height, width), THERMAL_BACKGROUND)
        for c, level in self.thermal_levels.items():
            thermal[label == c] = level

        night = bool(rng.random() < cfg.night_fraction)
        if night:
            mean = rgb.mean()
            rgb = mean + (rgb - mean) / cfg.night_contrast + rng.normal(0.0, cfg.night_noise, rgb.shape)
        illumination = Illumination.NIGHT if night else Illumination.DAY

        rgb8 = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
        thermal8 = np.rint(np.clip(thermal, 0.0, 1.0) * 255.0).astype(np.uint8)
        return rgb8, thermal8, label, illumination

    def generate_sample(self, index: int) -> SamplePair:
        """单个样本（与写入磁盘后读回的数组逐位一致）"""
        rgb8, thermal8, label, illumination = self._render_arrays(index)
        return SamplePair(
            rgb=to_unit_tensor(rgb8),
            thermal=to_unit_tensor(thermal8),
            label=torch.from_numpy(label),
            illumination=illumination,
            id=f"{index:05d}",
        )

    def split_ids(self) -> Dict[str, List[str]]:
        """按 seed 打乱后按比例切分，三个划分互不相交且覆盖全部样本"""
        ids = self.sample_ids()
        order = np.random.default_rng(self.config.seed).permutation(len(ids))
        n = len(ids)
        n_train = int(round(n * self.config.split_fractions[0]))
        n_val = min(n - n_train, int(round(n * self.config.split_fractions[1])))
        shuffled = [ids[i] for i in order]
        splits = {
            "train": shuffled[:n_train],
            "val": shuffled[n_train:n_train + n_val],
            "test": shuffled[n_train + n_val:],
        }
        return {name: sorted(members) for name, members in splits.items()}

    @_log.log_execution(level="INFO", log_args=True, log_result=False)
    def generate(self, root: Union[str, Path], force: bool = False) -> GenerationReport:
        root = Path(root)
        if root.exists() and any(root.iterdir()):
            if not force:
                raise DataError(f"target directory is not empty: {root} (use --force to overwrite)")
            logger.warning(f"overwriting existing dataset directory {root}")
            shutil.rmtree(root)
        for sub in ("rgb", "thermal", "labels"):
            (root / sub).mkdir(parents=True, exist_ok=True)

        histogram = np.zeros(self.config.num_classes, dtype=np.int64)
        illumination_lines = []
        night_count = 0
        for index, sample_id in enumerate(self.sample_ids()):
            rgb8, thermal8, label, illumination = self._render_arrays(index)
            write_uint8(root / "rgb" / f"{sample_id}.png", rgb8)
            write_uint8(root / "thermal" / f"{sample_id}.png", thermal8)
            write_uint8(root / "labels" / f"{sample_id}.png", label.astype(np.uint8))
            histogram += np.bincount(label.ravel(), minlength=self.config.num_classes)
            illumination_lines.append(f"{sample_id} {illumination.name_value}")
            night_count += illumination == Illumination.NIGHT

        splits = self.split_ids()
        for split in SPLITS:
            (root / f"{split}.txt").write_text("".join(f"{i}\n" for i in splits[split]), encoding="utf-8")
        (root / "illumination.txt").write_text("\n".join(illumination_lines) + "\n", encoding="utf-8")
        write_histogram(root / "histogram.csv", histogram)

        report = GenerationReport(
            root=root,
            split_counts={split: len(splits[split]) for split in SPLITS},
            histogram=histogram,
            night_count=int(night_count),
            ids=self.sample_ids(),
        )
        logger.info(f"synthetic dataset written to {root}: splits={report.split_counts}, "
                    f"night={report.night_count}, background={report.background_fraction:.3f}")
        return report


def write_histogram(path: Union[str, Path], histogram: np.ndarray,
                    class_names: Optional[List[str]] = None) -> Path:
    """标签直方图 CSV: class_id, class_name, count, fraction"""
    histogram = np.asarray(histogram, dtype=np.int64)
    total = max(int(histogram.sum()), 1)
    names = class_names or [f"class{c}" for c in range(len(histogram))]
    frame = pd.DataFrame({
        "class_id": np.arange(len(histogram)),
        "class_name": names,
        "count": histogram,
        "fraction": histogram / total,
    })
    frame.to_csv(path, index=False)
    return Path(path)
