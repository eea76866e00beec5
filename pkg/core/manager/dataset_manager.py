"""数据集管理模块

规范化目录布局：

    root/rgb/<id>.png  root/thermal/<id>.png  root/labels/<id>.png
    root/train.txt  root/val.txt  root/test.txt   每行一个 id
    root/illumination.txt                          每行 "<id> day|night"
"""
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch
from torch.utils.data import Dataset, DataLoader

from common.errors import DataError, DataFileNotFoundError, OutOfRangeError
from common.io import read_rgb, read_gray, read_label
from common.log import Logger
from model.entity import DatasetSpec, SamplePair, SPLITS
from model.enum import Illumination
from utils.image import resize_sample, augment

logger = Logger().get_logger()


def read_manifest(path: Path) -> List[str]:
    if not path.is_file():
        raise DataFileNotFoundError(f"missing file: {path}", path=str(path))
    ids = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            ids.append(line.split()[0])
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate ids in manifest {path}")
    return ids


class DatasetManager:
    """负责数据集清单的加载与校验、样本读取以及 DataLoader 构建"""

    def __init__(self, spec: DatasetSpec, check_files: bool = True):
        self.spec = spec
        self.manifests: Dict[str, List[str]] = {}
        self.illumination: Dict[str, Illumination] = {}
        self._load_manifests(check_files)

    def _load_manifests(self, check_files: bool) -> None:
        logger.info(f"Reading dataset manifests from {self.spec.root}...")
        for split in SPLITS:
            self.manifests[split] = read_manifest(self.spec.manifest_path(split))
        self._check_disjoint()
        self.illumination = self._read_illumination()
        if check_files:
            self._check_resolvable()
        counts = {split: len(ids) for split, ids in self.manifests.items()}
        logger.info(f"Loaded dataset manifests: {counts}")

    def _check_disjoint(self) -> None:
        for i, first in enumerate(SPLITS):
            for second in SPLITS[i + 1:]:
                shared = set(self.manifests[first]) & set(self.manifests[second])
                if shared:
                    raise DataError(
                        f"manifests {first} and {second} share {len(shared)} ids, e.g. {sorted(shared)[:3]}"
                    )

    def _read_illumination(self) -> Dict[str, Illumination]:
        path = self.spec.illumination_path
        if not path.is_file():
            raise DataFileNotFoundError(f"missing file: {path}", path=str(path))
        table = {}
        for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"malformed illumination entry on line {number} of {path}: {line!r}")
            try:
                table[parts[0]] = Illumination.parse(parts[1])
            except ValueError as e:
                raise DataError(f"{path}:{number}: {e}") from e
        missing = [i for ids in self.manifests.values() for i in ids if i not in table]
        if missing:
            raise DataError(f"{len(missing)} ids have no illumination entry, e.g. {missing[:3]}")
        return table

    def _check_resolvable(self) -> None:
        for split, ids in self.manifests.items():
            for sample_id in ids:
                for path in (self.spec.rgb_path(sample_id), self.spec.thermal_path(sample_id),
                             self.spec.label_path(sample_id)):
                    if not path.is_file():
                        raise DataFileNotFoundError(f"missing file: {path} (split {split})", path=str(path))

    def ids(self, split: str) -> List[str]:
        if split not in self.manifests:
            raise DataError(f"unknown split '{split}', expected one of {SPLITS}")
        return list(self.manifests[split])

    def load_sample(self, sample_id: str) -> SamplePair:
        """读取、归一化到 [0,1]，按配置缩放（图像双线性，标签最近邻）"""
        if sample_id not in self.illumination:
            raise DataError(f"id '{sample_id}' is not in any manifest")
        label = read_label(self.spec.label_path(sample_id))
        if label.numel() and label.max() >= self.spec.num_classes:
            raise OutOfRangeError(
                f"label out of range in {self.spec.label_path(sample_id)}: "
                f"max {int(label.max())} >= C={self.spec.num_classes}"
            )
        sample = SamplePair(
            rgb=read_rgb(self.spec.rgb_path(sample_id)),
            thermal=read_gray(self.spec.thermal_path(sample_id)),
            label=label,
            illumination=self.illumination[sample_id],
            id=sample_id,
        )
        sample = resize_sample(sample, self.spec.resize)
        return sample.validate(self.spec.num_classes)

    def label_histogram(self, split: str = "train") -> np.ndarray:
        """按类别统计像素数（缩放后的标签）"""
        histogram = np.zeros(self.spec.num_classes, dtype=np.int64)
        for sample_id in self.ids(split):
            label = self.load_sample(sample_id).label.numpy().ravel()
            histogram += np.bincount(label, minlength=self.spec.num_classes)
        return histogram

    def dataset(self, split: str, augment_samples: bool = False, seed: int = 0,
                flip_prob: float = 0.5, crop_fraction: float = 0.9,
                dtype: torch.dtype = torch.float32) -> 'SegmentationDataset':
        return SegmentationDataset(self, self.ids(split), augment_samples, seed, flip_prob, crop_fraction, dtype)

    def loader(self, split: str, batch_size: int, shuffle: bool = False, seed: int = 0,
               augment_samples: bool = False, num_workers: int = 0, prefetch_factor: Optional[int] = None,
               crop_fraction: float = 0.9, flip_prob: float = 0.5,
               dtype: torch.dtype = torch.float32) -> DataLoader:
        """固定 seed 时批次顺序确定；num_workers > 0 时使用有界预取队列"""
        dataset = self.dataset(split, augment_samples, seed, flip_prob=flip_prob, crop_fraction=crop_fraction, dtype=dtype)
        kwargs = {}
        if num_workers > 0:
            kwargs["prefetch_factor"] = prefetch_factor or 2
        return DataLoader(
            dataset,
            batch_size=batch_size,
            shuffle=shuffle,
            num_workers=num_workers,
            generator=torch.Generator().manual_seed(int(seed)),
            collate_fn=collate_samples,
            **kwargs,
        )


class SegmentationDataset(Dataset):
    """torch Dataset；增强的随机性由 (seed, epoch, index) 决定"""

    def __init__(self, manager: DatasetManager, ids: List[str], augment_samples: bool = False,
                 seed: int = 0, flip_prob: float = 0.5, crop_fraction: float = 0.9,
                 dtype: torch.dtype = torch.float32):
        self.manager = manager
        self.ids = ids
        self.augment_samples = augment_samples
        self.seed = seed
        self.flip_prob = flip_prob
        self.crop_fraction = crop_fraction
        self.dtype = dtype
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.ids)

    def sample_seed(self, index: int) -> int:
        return int(np.random.SeedSequence([self.seed, self.epoch, index]).generate_state(1)[0])

    def __getitem__(self, index: int) -> Dict[str, object]:
        sample = self.manager.load_sample(self.ids[index])
        if self.augment_samples:
            sample = augment(sample, self.sample_seed(index), self.flip_prob, self.crop_fraction)
        return {
            "rgb": sample.rgb.to(self.dtype),
            "thermal": sample.thermal.to(self.dtype),
            "label": sample.label.long(),
            "illumination": torch.tensor(sample.illumination.id, dtype=torch.long),
            "id": sample.id,
        }


def collate_samples(items: List[Dict[str, object]]) -> Dict[str, object]:
    return {
        "rgb": torch.stack([item["rgb"] for item in items]),
        "thermal": torch.stack([item["thermal"] for item in items]),
        "label": torch.stack([item["label"] for item in items]),
        "illumination": torch.stack([item["illumination"] for item in items]),
        "id": [item["id"] for item in items],
    }
