"""消融实验执行器

每个轴的取值网格来自 config/ablation.ini；每个 (取值, 种子) 训练一个子运行并在测试集上评估，
结果汇总为 ablation_<axis>.csv。ns 轴每个种子只训练一次，再用不同的采样次数评估。
"""
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import pandas as pd

from common.errors import ConfigError
from common.log import Logger
from core.config.config_manager import RunConfig, load_ablation_grid
from core.executor.evaluator import Evaluator
from core.executor.trainer import Trainer
from core.manager.dataset_manager import DatasetManager
from core.reporter.metrics_reporter import write_ablation_table
from model.enum import AblationAxis, FusionMode, PriorCondition

logger = Logger().get_logger()

LOSS_VARIANTS = {
    "ce": (False, False),
    "ce+kl": (False, True),
    "weightce": (True, False),
    "weightce+kl": (True, True),
}


def _loss_variant(config: RunConfig, value: str) -> RunConfig:
    key = value.replace(" ", "").lower()
    if key not in LOSS_VARIANTS:
        raise ConfigError(f"unknown loss variant '{value}', expected one of CE, CE+KL, WeightCE, WeightCE+KL")
    weighted, with_kl = LOSS_VARIANTS[key]
    beta = (config.loss.beta or 0.5) if with_kl else 0.0
    return config.replace(loss={"weighted": weighted, "beta": beta})


VARIANTS: Dict[AblationAxis, Callable[[RunConfig, str], RunConfig]] = {
    AblationAxis.BETA: lambda c, v: c.replace(loss={"beta": float(v)}),
    AblationAxis.NS: lambda c, v: c.replace(eval={"num_samples": int(v)}),
    AblationAxis.PRIOR: lambda c, v: c.replace(model={"prior_condition": PriorCondition.parse(v)}),
    AblationAxis.LOSS: _loss_variant,
    AblationAxis.FUSION: lambda c, v: c.replace(model={"fusion_mode": FusionMode.parse(v)}),
    AblationAxis.KERNEL: lambda c, v: c.replace(model={"kernel_size": int(v)}),
    AblationAxis.SQUEEZE: lambda c, v: c.replace(model={"squeeze_ratio": int(v)}),
    AblationAxis.LATENT: lambda c, v: c.replace(model={"latent_dim": int(v)}),
}


def _nan(value: Optional[float]) -> float:
    return math.nan if value is None else float(value)


class AblationRunner:
    """按轴运行固定网格"""

    def __init__(self, config: RunConfig, run_dir: Union[str, Path], grid_file: str = "config/ablation.ini",
                 manager: Optional[DatasetManager] = None):
        self.config = config
        self.run_dir = Path(run_dir)
        self.grid_file = grid_file
        self.manager = manager or DatasetManager(config.data.dataset_spec())

    def variant(self, axis: AblationAxis, value: str, seed: int, epochs: Optional[int] = None) -> RunConfig:
        try:
            config = VARIANTS[axis](self.config, value)
        except ValueError as e:
            raise ConfigError(f"invalid {axis.name_value} ablation value '{value}': {e}") from e
        train = {"seed": seed, "resume": ""}
        if epochs:
            train["epochs"] = epochs
        return config.replace(train=train).validate()

    def _train(self, config: RunConfig, name: str) -> Trainer:
        trainer = Trainer(config, self.run_dir / name, self.manager)
        trainer.fit()
        return trainer

    def _evaluate(self, trainer: Trainer, config: RunConfig) -> Dict[str, float]:
        evaluator = Evaluator(trainer.model, self.manager, config.eval.batch_size,
                              config.exclude_background, config.torch_dtype)
        report = evaluator.evaluate("test", config.eval.num_samples, config.eval.sample_seed)
        return {
            "mAcc": _nan(report.overall.mean_acc),
            "mIoU": _nan(report.overall.mean_iou),
            "day_mIoU": _nan(report.summaries["day"].mean_iou),
            "night_mIoU": _nan(report.summaries["night"].mean_iou),
        }

    def run(self, axis: AblationAxis) -> pd.DataFrame:
        axis = AblationAxis.parse(axis)
        grid = load_ablation_grid(axis.name_value, self.grid_file)
        axis_name = axis.name_value
        logger.info(f"ablation {axis_name}: values={grid['values']} seeds={grid['seeds']}")
        rows: List[Dict[str, object]] = []
        for seed in grid["seeds"]:
            shared: Optional[Trainer] = None
            for value in grid["values"]:
                config = self.variant(axis, value, seed, grid["epochs"])
                if axis == AblationAxis.NS:
                    # 采样次数只影响推理，同一种子共享一次训练
                    shared = shared or self._train(config, f"{axis_name}/seed{seed}")
                    trainer = shared
                else:
                    trainer = self._train(config, f"{axis_name}/{value}_seed{seed}")
                metrics = self._evaluate(trainer, config)
                logger.info(f"ablation {axis_name}={value} seed={seed}: mIoU={metrics['mIoU']:.4f}")
                rows.append({axis_name: value, "seed": seed, **metrics})
        runs = pd.DataFrame(rows)
        return write_ablation_table(self.run_dir / f"ablation_{axis_name}.csv", runs, axis_name)
