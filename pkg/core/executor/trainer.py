"""训练执行器

- 优化器注册表：名称 -> 工厂函数，默认提供 adamw，可在运行时注册其他实现
- 类别权重只在启动时由训练集直方图计算一次，并缓存到运行目录
- 每轮结束保存 last.npz，验证集 mIoU 提升时另存 best.npz
- 损失出现非有限值时写出潜变量统计后中止
"""
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd
import torch

from common.errors import ConfigError, NonFiniteError, TrainingDivergedError
from common.io import (save_checkpoint, load_checkpoint, import_backbone_weights, write_class_weights,
                       read_class_weights)
from common.log import Logger
from core.config.config_manager import RunConfig
from core.executor.evaluator import Evaluator
from core.loss.segmentation_loss import compute_class_weights, total_loss
from core.manager.dataset_manager import DatasetManager
from core.network.vpfnet import VPFNet, build_network
from core.patterns.decorator.timer import time_logger
from model.entity import ClassWeights, LossBreakdown, NetworkOutput
from model.enum import SampleMode

_log = Logger()
logger = _log.get_logger()

OptimizerFactory = Callable[[Iterable[torch.nn.Parameter], RunConfig], torch.optim.Optimizer]
OPTIMIZERS: Dict[str, OptimizerFactory] = {}


def register_optimizer(name: str):
    """注册优化器工厂，名称不区分大小写"""
    def decorator(factory: OptimizerFactory) -> OptimizerFactory:
        OPTIMIZERS[name.lower()] = factory
        return factory
    return decorator


@register_optimizer("adamw")
def _adamw(params, config: RunConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(params, lr=config.train.lr, weight_decay=config.train.weight_decay)


def build_optimizer(params, config: RunConfig) -> torch.optim.Optimizer:
    name = config.train.optimizer.lower()
    if name not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer '{config.train.optimizer}', registered: {sorted(OPTIMIZERS)}")
    return OPTIMIZERS[name](params, config)


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(epoch)]).generate_state(1)[0])


@dataclass
class EpochRecord:
    """training_log.csv 的一行"""
    epoch: int
    step: int
    wce: float
    kl_mean: float
    total: float
    val_mAcc: Optional[float] = None
    val_mIoU: Optional[float] = None
    seconds: float = 0.0


class Trainer:
    """单进程训练；给定 (配置, seed) 且精度固定时结果可复现"""

    def __init__(self, config: RunConfig, run_dir: Union[str, Path], manager: Optional[DatasetManager] = None):
        self.config = config
        self.run_dir = Path(run_dir)
        self.dtype = config.torch_dtype
        self.beta = config.effective_beta
        self.manager = manager or DatasetManager(config.data.dataset_spec())
        self.model: VPFNet = build_network(config.network_spec(), seed=config.train.seed, dtype=self.dtype)
        if config.model.backbone_weights:
            import_backbone_weights(self.model, config.model.backbone_weights)
        self.optimizer = build_optimizer(self.model.parameters(), config)
        self.class_weights = self._class_weights()
        self.step = 0
        self.epoch = 0
        self.best_miou: Optional[float] = None
        self.history: List[EpochRecord] = []
        if config.train.resume:
            self.resume(config.train.resume)

    @property
    def checkpoint_dir(self) -> Path:
        return self.run_dir / "checkpoints"

    @property
    def log_path(self) -> Path:
        return self.run_dir / "training_log.csv"

    def _class_weights(self) -> ClassWeights:
        cache = self.run_dir / "class_weights.txt"
        if not self.config.loss.weighted:
            weights = ClassWeights.uniform(self.config.data.num_classes, dtype=self.dtype)
        elif cache.is_file():
            weights = read_class_weights(cache, self.config.data.num_classes).to(self.dtype)
            logger.info(f"class weights read from cache {cache}")
        else:
            histogram = self.manager.label_histogram("train")
            weights = compute_class_weights(histogram, self.config.loss.class_weight_k, self.dtype)
        write_class_weights(cache, weights)
        logger.info(f"class weights: {[round(float(w), 4) for w in weights.weights]}")
        return weights

    def resume(self, path: Union[str, Path]) -> None:
        """从检查点恢复参数、优化器状态、步数与轮次"""
        checkpoint = load_checkpoint(path)
        checkpoint.apply_to(self.model)
        checkpoint.apply_optimizer(self.optimizer)
        self.step, self.epoch, self.best_miou = checkpoint.step, checkpoint.epoch, checkpoint.best_miou
        if self.log_path.is_file():
            frame = pd.read_csv(self.log_path)
            frame = frame[frame["epoch"] <= self.epoch]
            self.history = [EpochRecord(**{k: (None if pd.isna(v) else v) for k, v in row.items()})
                            for row in frame.to_dict("records")]
        logger.info(f"resumed from {path}: epoch={self.epoch} step={self.step} best_mIoU={self.best_miou}")

    def _forward(self, batch: Dict[str, object], generator: torch.Generator) -> NetworkOutput:
        mode = SampleMode.RANDOM if self.model.is_probabilistic else SampleMode.POSTERIOR_MEAN
        return self.model(batch["rgb"], batch["thermal"], mode=mode, generator=generator)

    def _loss(self, batch: Dict[str, object], output: NetworkOutput) -> LossBreakdown:
        return total_loss(output.logits, batch["label"], output.posteriors, batch["illumination"],
                          self.model.prior, self.class_weights, beta=self.beta)

    def dump_diagnostics(self, output: Optional[NetworkOutput], breakdown: Optional[LossBreakdown],
                         batch_ids: List[str]) -> Path:
        """写出各层潜变量均值 / 对数方差的统计量"""
        path = self.run_dir / "nan_diagnostics.txt"
        lines = [f"epoch={self.epoch + 1} step={self.step} ids={','.join(batch_ids)}"]
        if breakdown is not None:
            lines.append(f"loss {breakdown.as_dict()}")
        if output is None:
            # 前向过程中已出现非有限值，改为记录各融合层参数的统计量
            for name, param in self.model.fusions.named_parameters():
                values = param.detach()
                lines.append(f"fusions.{name}: nonfinite_fraction="
                             f"{float(1.0 - torch.isfinite(values).double().mean()):.6g}")
        for level, posterior in enumerate(output.posteriors if output is not None else []):
            if posterior is None:
                lines.append(f"level{level}: no posterior")
                continue
            stats = posterior.statistics()
            lines.append(f"level{level}: " + " ".join(f"{k}={v:.6g}" for k, v in sorted(stats.items())))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def train_step(self, batch: Dict[str, object], generator: torch.Generator) -> LossBreakdown:
        try:
            output = self._forward(batch, generator)
        except NonFiniteError as e:
            path = self.dump_diagnostics(None, None, list(batch["id"]))
            raise TrainingDivergedError(f"non-finite activations at step {self.step}: {e.message}, diagnostics in {path}",
                                        step=self.step) from e
        breakdown = self._loss(batch, output)
        if not torch.isfinite(breakdown.total):
            path = self.dump_diagnostics(output, breakdown, list(batch["id"]))
            raise TrainingDivergedError(f"non-finite loss at step {self.step}, latent statistics in {path}",
                                        step=self.step)
        self.optimizer.zero_grad(set_to_none=True)
        breakdown.total.backward()
        self.optimizer.step()
        self.step += 1
        return breakdown

    def train_epoch(self) -> Dict[str, float]:
        """训练一轮，返回各项损失的批次平均"""
        epoch = self.epoch + 1
        seed = epoch_seed(self.config.train.seed, epoch)
        data = self.config.data
        loader = self.manager.loader("train", self.config.train.batch_size, shuffle=True, seed=seed,
                                     augment_samples=True, num_workers=data.num_workers,
                                     crop_fraction=data.crop_fraction, flip_prob=data.flip_prob, dtype=self.dtype)
        loader.dataset.set_epoch(epoch)
        generator = torch.Generator().manual_seed(seed)
        self.model.train()
        totals = {"wce": 0.0, "kl_mean": 0.0, "total": 0.0}
        batches = 0
        for batch in loader:
            values = self.train_step(batch, generator).as_dict()
            for key in totals:
                totals[key] += values[key]
            batches += 1
        return {key: value / max(batches, 1) for key, value in totals.items()}

    def validate(self):
        if not self.manager.ids("val"):
            return None
        evaluator = Evaluator(self.model, self.manager, self.config.eval.batch_size,
                              self.config.exclude_background, self.dtype)
        return evaluator.evaluate("val", self.config.eval.num_samples, self.config.eval.sample_seed).overall

    def save(self, name: str) -> Path:
        from core import __version__
        return save_checkpoint(self.checkpoint_dir / f"{name}.npz", self.model, self.optimizer,
                               config_text=self.config.to_ini(), step=self.step, epoch=self.epoch,
                               best_miou=self.best_miou, version=__version__)

    def write_log(self) -> Path:
        frame = pd.DataFrame([asdict(record) for record in self.history],
                             columns=[f for f in EpochRecord.__dataclass_fields__])
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(self.log_path, index=False)
        return self.log_path

    @time_logger
    def run_epoch(self) -> EpochRecord:
        start = time.time()
        losses = self.train_epoch()
        self.epoch += 1
        summary = self.validate()
        record = EpochRecord(epoch=self.epoch, step=self.step, **losses,
                             val_mAcc=None if summary is None else summary.mean_acc,
                             val_mIoU=None if summary is None else summary.mean_iou,
                             seconds=time.time() - start)
        self.history.append(record)
        improved = record.val_mIoU is not None and (self.best_miou is None or record.val_mIoU > self.best_miou)
        if improved:
            self.best_miou = record.val_mIoU
        self.save("last")
        if improved or (summary is None and self.epoch == self.config.train.epochs):
            self.save("best")
        self.write_log()
        _log.log_json("info", "epoch finished", epoch=record.epoch, step=record.step, wce=record.wce,
                      kl_mean=record.kl_mean, total=record.total, val_miou=record.val_mIoU)
        return record

    def fit(self) -> List[EpochRecord]:
        """训练到配置的轮数；从检查点恢复时从下一轮继续"""
        logger.info(f"training {self.config.train.epochs} epochs from epoch {self.epoch}, "
                    f"beta={self.beta}, fusion={self.model.fusion_mode.name_value}, "
                    f"train images={len(self.manager.ids('train'))}")
        while self.epoch < self.config.train.epochs:
            self.run_epoch()
        return self.history
