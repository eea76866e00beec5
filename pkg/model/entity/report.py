"""评价指标与校验报告的数据结构"""
from dataclasses import dataclass, field
from typing import List, Optional, Dict


@dataclass
class MetricsSummary:
    """由混淆矩阵汇总得到的指标；未定义的类别记为 None"""
    class_names: List[str]
    per_class_acc: List[Optional[float]]
    per_class_iou: List[Optional[float]]
    mean_acc: Optional[float]
    mean_iou: Optional[float]
    pixel_count: int = 0
    excluded: List[int] = field(default_factory=list)

    def absent_classes(self) -> List[str]:
        return [name for name, iou in zip(self.class_names, self.per_class_iou) if iou is None]

    def to_flat_dict(self, prefix: str = "") -> Dict[str, Optional[float]]:
        """扁平 key=value 形式"""
        p = f"{prefix}." if prefix else ""
        flat = {f"{p}mAcc": self.mean_acc, f"{p}mIoU": self.mean_iou, f"{p}pixels": self.pixel_count}
        for name, acc, iou in zip(self.class_names, self.per_class_acc, self.per_class_iou):
            flat[f"{p}{name}.Acc"] = acc
            flat[f"{p}{name}.IoU"] = iou
        return flat

    def to_table_row(self) -> Dict[str, Optional[float]]:
        """按 <class>_Acc, <class>_IoU, ..., mAcc, mIoU 的列顺序"""
        row = {}
        for name, acc, iou in zip(self.class_names, self.per_class_acc, self.per_class_iou):
            row[f"{name}_Acc"] = acc
            row[f"{name}_IoU"] = iou
        row["mAcc"] = self.mean_acc
        row["mIoU"] = self.mean_iou
        return row


@dataclass
class OracleReport:
    """校验结果：tested 与 reference 的偏差是否在容差内"""
    name: str
    reference: float
    tested: float
    tolerance: float
    relative: bool = False
    passed: bool = False
    samples: Optional[int] = None
    step: Optional[float] = None

    @classmethod
    def compare(cls, name: str, reference: float, tested: float, tolerance: float,
                relative: bool = False, samples: Optional[int] = None,
                step: Optional[float] = None) -> 'OracleReport':
        deviation = abs(float(tested) - float(reference))
        if relative:
            scale = abs(float(reference))
            passed = deviation <= tolerance * scale if scale > 0 else deviation <= tolerance
        else:
            passed = deviation <= tolerance
        return cls(name, float(reference), float(tested), tolerance, relative, passed, samples, step)

    @property
    def message(self) -> str:
        kind = "rel" if self.relative else "abs"
        status = "passed" if self.passed else "FAILED"
        return (f"[{self.name}] {status}: tested={self.tested:.10g} reference={self.reference:.10g} "
                f"({kind} tol {self.tolerance:g})")


@dataclass
class MonteCarloEstimate:
    value: float
    stderr: float
    n_samples: int
