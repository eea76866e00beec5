"""指标报告写出

- metrics.txt：逐行 key=value，便于 grep
- metrics.csv：每个子集（overall / day / night / rgb_only ...）一行
- per_class.csv：逐类 Acc / IoU 表，列顺序为 <class>_Acc, <class>_IoU, ..., mAcc, mIoU
"""
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import pandas as pd

from common.log import Logger
from model.entity import MetricsSummary

logger = Logger().get_logger()


def _fmt(value: Optional[float]) -> str:
    return "nan" if value is None else f"{value:.6f}"


class MetricsReporter:
    """把一组命名的 MetricsSummary 写到运行目录"""

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)

    def write(self, summaries: Mapping[str, MetricsSummary], per_class: bool = True,
              header: Optional[Dict[str, object]] = None) -> List[Path]:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        written = [self.write_text(summaries, header), self.write_csv(summaries)]
        if per_class:
            written.append(self.write_per_class(summaries))
        for name, summary in summaries.items():
            logger.info(f"[{name}] mAcc={_fmt(summary.mean_acc)} mIoU={_fmt(summary.mean_iou)} "
                        f"pixels={summary.pixel_count}")
        return written

    def write_text(self, summaries: Mapping[str, MetricsSummary],
                   header: Optional[Dict[str, object]] = None) -> Path:
        lines = [f"{key}={value}" for key, value in (header or {}).items()]
        for name, summary in summaries.items():
            for key, value in summary.to_flat_dict(prefix=name).items():
                lines.append(f"{key}={value if isinstance(value, int) else _fmt(value)}")
            absent = summary.absent_classes()
            if absent:
                lines.append(f"{name}.absent_classes={','.join(absent)}")
        path = self.run_dir / "metrics.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def write_csv(self, summaries: Mapping[str, MetricsSummary]) -> Path:
        frame = pd.DataFrame([
            {"subset": name, "mAcc": s.mean_acc, "mIoU": s.mean_iou, "pixels": s.pixel_count}
            for name, s in summaries.items()
        ])
        path = self.run_dir / "metrics.csv"
        frame.to_csv(path, index=False)
        return path

    def write_per_class(self, summaries: Mapping[str, MetricsSummary]) -> Path:
        frame = pd.DataFrame([{"subset": name, **s.to_table_row()} for name, s in summaries.items()])
        path = self.run_dir / "per_class.csv"
        frame.to_csv(path, index=False)
        return path


def write_ablation_table(path: Union[str, Path], runs: pd.DataFrame, axis: str) -> pd.DataFrame:
    """每个取值一行：种子数、各指标的均值与标准差"""
    metric_columns = [c for c in runs.columns if c not in (axis, "seed")]
    grouped = runs.groupby(axis, sort=False)[metric_columns]
    table = grouped.mean().add_suffix("_mean").join(grouped.std(ddof=0).add_suffix("_std"))
    table.insert(0, "seeds", runs.groupby(axis, sort=False)["seed"].count())
    table = table.reset_index()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    runs.to_csv(path.with_name(path.stem + "_runs.csv"), index=False)
    logger.info(f"ablation table written: {path}\n{table.to_string(index=False)}")
    return table
