"""混淆矩阵与 mAcc / mIoU

行为真值、列为预测。逐类指标和均值都先用有理数精确计算，最后统一转换为浮点。
"""
from fractions import Fraction
from typing import List, Optional, Sequence, Union

import numpy as np
import torch

from common.errors import ShapeMismatchError, OutOfRangeError
from model.entity import MetricsSummary

ArrayLike = Union[np.ndarray, torch.Tensor]


def _as_numpy(values: ArrayLike) -> np.ndarray:
    if torch.is_tensor(values):
        values = values.detach().cpu().numpy()
    return np.asarray(values)


def _mean(values: List[Fraction]) -> Optional[float]:
    if not values:
        return None
    return float(sum(values, Fraction(0)) / len(values))


class ConfusionMatrix:

    def __init__(self, num_classes: int, counts: Optional[np.ndarray] = None):
        self.num_classes = num_classes
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (num_classes, num_classes):
            raise ShapeMismatchError(f"confusion counts must be {num_classes}x{num_classes}, got {counts.shape}")
        if (counts < 0).any():
            raise OutOfRangeError("confusion counts must be nonnegative")
        self.counts = counts.copy()

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, pred: ArrayLike, gt: ArrayLike) -> 'ConfusionMatrix':
        """逐像素累加 counts[gt, pred]，原地更新并返回自身"""
        pred, gt = _as_numpy(pred), _as_numpy(gt)
        if pred.shape != gt.shape:
            raise ShapeMismatchError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
        if pred.size == 0:
            return self
        pred = pred.astype(np.int64).ravel()
        gt = gt.astype(np.int64).ravel()
        for name, values in (("prediction", pred), ("ground truth", gt)):
            if values.min() < 0 or values.max() >= self.num_classes:
                raise OutOfRangeError(f"label out of range in {name} (C={self.num_classes})")
        index = gt * self.num_classes + pred
        self.counts += np.bincount(index, minlength=self.num_classes ** 2).reshape(self.num_classes, -1)
        return self

    def merge(self, other: 'ConfusionMatrix') -> 'ConfusionMatrix':
        if other.num_classes != self.num_classes:
            raise ShapeMismatchError(f"cannot merge {self.num_classes}-class and {other.num_classes}-class matrices")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    __add__ = merge

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"ConfusionMatrix(num_classes={self.num_classes}, total={self.total})"

    def summarize(self, exclude_background: bool = False,
                  class_names: Optional[Sequence[str]] = None) -> MetricsSummary:
        """逐类 Acc / IoU 以及类均值

        Acc_c = n_cc / 行和；IoU_c = n_cc / (行和 + 列和 − n_cc)；分母为 0 的类记为 None 且不计入均值
        """
        names = list(class_names) if class_names else [f"class{c}" for c in range(self.num_classes)]
        rows = self.counts.sum(axis=1)
        cols = self.counts.sum(axis=0)
        diagonal = np.diag(self.counts)
        accs: List[Optional[Fraction]] = []
        ious: List[Optional[Fraction]] = []
        for c in range(self.num_classes):
            tp, row, col = int(diagonal[c]), int(rows[c]), int(cols[c])
            accs.append(Fraction(tp, row) if row > 0 else None)
            union = row + col - tp
            ious.append(Fraction(tp, union) if union > 0 else None)

        excluded = [0] if exclude_background else []
        mean_acc = _mean([a for c, a in enumerate(accs) if a is not None and c not in excluded])
        mean_iou = _mean([i for c, i in enumerate(ious) if i is not None and c not in excluded])
        return MetricsSummary(
            class_names=names,
            per_class_acc=[None if a is None else float(a) for a in accs],
            per_class_iou=[None if i is None else float(i) for i in ious],
            mean_acc=mean_acc,
            mean_iou=mean_iou,
            pixel_count=self.total,
            excluded=excluded,
        )


def accumulate(cm: ConfusionMatrix, pred: ArrayLike, gt: ArrayLike) -> ConfusionMatrix:
    return cm.accumulate(pred, gt)


def summarize(cm: ConfusionMatrix, exclude_background: bool = False,
              class_names: Optional[Sequence[str]] = None) -> MetricsSummary:
    return cm.summarize(exclude_background, class_names)
