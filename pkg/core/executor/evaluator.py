"""评估执行器

按图像光照分别累积白天 / 夜间混淆矩阵，整体矩阵即二者之和。
缺失模态评估分别把 RGB 或热红外置零，并给出两者逐项取小的最差结果。
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import torch

from common.errors import DataError
from common.log import Logger
from core.manager.dataset_manager import DatasetManager
from core.metrics.confusion import ConfusionMatrix
from core.network.vpfnet import VPFNet
from model.entity import MetricsSummary
from model.enum import Illumination, Modality

_log = Logger()
logger = _log.get_logger()

Predictor = Callable[[Dict[str, object]], torch.Tensor]

SUBSETS = ("overall", "day", "night")


@dataclass
class EvaluationReport:
    """一次评估的混淆矩阵与汇总指标"""
    split: str
    matrices: Dict[str, ConfusionMatrix]
    summaries: Dict[str, MetricsSummary]
    num_images: int
    num_samples: int = 1
    missing: Optional[Modality] = None
    extra: Dict[str, MetricsSummary] = field(default_factory=dict)

    @property
    def overall(self) -> MetricsSummary:
        return self.summaries["overall"]

    @property
    def mean_iou(self) -> Optional[float]:
        return self.overall.mean_iou

    def all_summaries(self) -> Dict[str, MetricsSummary]:
        return {**self.summaries, **self.extra}


def _min_optional(a: Optional[float], b: Optional[float]) -> Optional[float]:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def worst_of(first: MetricsSummary, second: MetricsSummary) -> MetricsSummary:
    """逐类、逐指标取两者中较小的值"""
    return MetricsSummary(
        class_names=list(first.class_names),
        per_class_acc=[_min_optional(a, b) for a, b in zip(first.per_class_acc, second.per_class_acc)],
        per_class_iou=[_min_optional(a, b) for a, b in zip(first.per_class_iou, second.per_class_iou)],
        mean_acc=_min_optional(first.mean_acc, second.mean_acc),
        mean_iou=_min_optional(first.mean_iou, second.mean_iou),
        pixel_count=first.pixel_count,
        excluded=list(first.excluded),
    )


class Evaluator:
    """在某个划分上运行推理并汇总指标"""

    def __init__(self, model: Optional[VPFNet], manager: DatasetManager, batch_size: int = 4,
                 exclude_background: bool = False, dtype: torch.dtype = torch.float32):
        self.model = model
        self.manager = manager
        self.batch_size = batch_size
        self.exclude_background = exclude_background
        self.dtype = dtype
        self.num_classes = manager.spec.num_classes
        self.class_names = manager.spec.class_names

    def _model_predictor(self, num_samples: int, seed: int, missing: Optional[Modality]) -> Predictor:
        if self.model is None:
            raise DataError("evaluation needs a model or an explicit predictor")
        counter = {"batch": 0}

        def predict(batch: Dict[str, object]) -> torch.Tensor:
            # 每个批次使用不同但确定的种子
            batch_seed = seed + counter["batch"]
            counter["batch"] += 1
            rgb, thermal = batch["rgb"], batch["thermal"]
            if missing is None:
                output = self.model.infer_averaged(rgb, thermal, num_samples=num_samples, seed=batch_seed)
            elif missing == Modality.RGB:
                output = self.model.infer_missing_modality(thermal=thermal, num_samples=num_samples, seed=batch_seed)
            else:
                output = self.model.infer_missing_modality(rgb=rgb, num_samples=num_samples, seed=batch_seed)
            return output.labels

        return predict

    def evaluate(self, split: str = "test", num_samples: int = 1, seed: int = 0,
                 missing: Optional[Modality] = None, predictor: Optional[Predictor] = None) -> EvaluationReport:
        """missing 表示被置零的模态；predictor(batch) -> (B, H, W) 预测标签，缺省时使用模型"""
        if not self.manager.ids(split):
            raise DataError(f"split '{split}' is empty")
        restore_training = self.model is not None and self.model.training
        if self.model is not None:
            self.model.eval()
        predict = predictor or self._model_predictor(num_samples, seed, missing)
        matrices = {
            Illumination.DAY: ConfusionMatrix(self.num_classes),
            Illumination.NIGHT: ConfusionMatrix(self.num_classes),
        }
        num_images = 0
        loader = self.manager.loader(split, self.batch_size, shuffle=False, dtype=self.dtype)
        try:
            with torch.no_grad():
                for batch in loader:
                    predicted = predict(batch)
                    for index, illumination_id in enumerate(batch["illumination"].tolist()):
                        matrices[Illumination.parse(illumination_id)].accumulate(
                            predicted[index], batch["label"][index])
                    num_images += len(batch["id"])
        finally:
            if restore_training:
                self.model.train()

        by_subset = {
            "overall": matrices[Illumination.DAY] + matrices[Illumination.NIGHT],
            "day": matrices[Illumination.DAY],
            "night": matrices[Illumination.NIGHT],
        }
        summaries = {name: cm.summarize(self.exclude_background, self.class_names) for name, cm in by_subset.items()}
        report = EvaluationReport(split, by_subset, summaries, num_images, num_samples, missing)
        _log.log_json("info", "evaluation summary", split=split, num_samples=num_samples,
                      missing=None if missing is None else missing.name_value, images=num_images,
                      **{f"{name}.mIoU": s.mean_iou for name, s in summaries.items()},
                      **{f"{name}.mAcc": s.mean_acc for name, s in summaries.items()})
        return report

    def evaluate_missing_modality(self, split: str = "test", num_samples: int = 1,
                                  seed: int = 0) -> Dict[str, EvaluationReport]:
        """RGB-only（热红外置零）、thermal-only（RGB 置零）以及最差结果"""
        rgb_only = self.evaluate(split, num_samples, seed, missing=Modality.THERMAL)
        thermal_only = self.evaluate(split, num_samples, seed, missing=Modality.RGB)
        worst = {name: worst_of(rgb_only.summaries[name], thermal_only.summaries[name]) for name in SUBSETS}
        logger.info(f"missing-modality {split}: rgb_only mIoU={rgb_only.mean_iou} "
                    f"thermal_only mIoU={thermal_only.mean_iou} worst mIoU={worst['overall'].mean_iou}")
        return {"rgb_only": rgb_only, "thermal_only": thermal_only,
                "worst": EvaluationReport(split, {}, worst, rgb_only.num_images, num_samples)}
