#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
VPFNet 命令行入口

子命令：
- generate  生成合成数据集，或把 MFNet / PST900 转换为规范化布局
- train     训练并保存检查点与训练日志
- eval      整体 / 白天 / 夜间指标，可选缺失模态评估
- infer     单对图像推理，导出标签图、置信度与潜变量诊断图
- ablate    按固定网格运行消融实验

退出码：0 成功；业务错误为错误类别 id；用户中断为 130
"""

import argparse
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch

from common.errors import VpfError, DataError
from common.io import (load_checkpoint, read_rgb, read_gray, write_label, write_gray, normalize_map)
from common.log import Logger
from core import __version__
from core.config import ConfigManager, RunConfig
from core.executor import Trainer, Evaluator, AblationRunner
from core.manager import DatasetManager, convert_mfnet, convert_pst900
from core.network.vpfnet import VPFNet, build_network
from core.patterns.decorator.timer import time_logger
from core.reporter import MetricsReporter
from core.session import RunSession
from model.enum import AblationAxis, DatasetKind, ErrorCategory, FusionMode, SampleMode
from utils.generator import SyntheticDatasetGenerator, GeneratorConfig, write_histogram
from utils.image import resize_image

# 一等命令行参数 -> (section, key)
FLAG_FIELDS = {
    "dataset_root": ("DATA", "dataset_root"),
    "backbone": ("MODEL", "backbone"),
    "fusion_mode": ("MODEL", "fusion_mode"),
    "prior_condition": ("MODEL", "prior_condition"),
    "beta": ("LOSS", "beta"),
    "lr": ("TRAIN", "lr"),
    "weight_decay": ("TRAIN", "weight_decay"),
    "epochs": ("TRAIN", "epochs"),
    "batch_size": ("TRAIN", "batch_size"),
    "seed": ("TRAIN", "seed"),
    "precision": ("TRAIN", "precision"),
    "num_samples": ("EVAL", "num_samples"),
    "missing_modality": ("EVAL", "missing_modality"),
}


def load_model(checkpoint_path: str, config: RunConfig) -> VPFNet:
    """按检查点中回显的网络结构构建模型并载入参数"""
    checkpoint = load_checkpoint(checkpoint_path)
    structure = RunConfig.from_ini(checkpoint.config_text) if checkpoint.config_text else config
    model = build_network(structure.network_spec(), dtype=config.torch_dtype)
    checkpoint.apply_to(model)
    model.eval()
    return model


class VpfRunner:
    """命令执行器类，负责参数解析、配置装配与错误到退出码的映射"""

    def __init__(self):
        self.logger = Logger().get_logger()
        self.args = None
        self.banner = "=" * 80

    def run(self, argv: Optional[List[str]] = None) -> int:
        """
        Returns:
            int: 退出码，0表示成功，非0表示失败
        """
        try:
            self.args = self._parse_arguments(argv)
            config = self._build_config()
            return getattr(self, f"cmd_{self.args.command}")(config)
        except KeyboardInterrupt:
            self.logger.warning("\n执行被用户中断")
            return 130  # 130是SIGINT的标准退出码
        except VpfError as e:
            self.logger.error(e.one_line())
            print(e.one_line(), file=sys.stderr)
            return e.category.id
        except Exception as e:
            self.logger.opt(exception=e).error(f"执行过程中发生错误: {e}")
            text = " ".join(str(e).split())
            print(f"error={ErrorCategory.INTERNAL.name_value} message={type(e).__name__}: {text}", file=sys.stderr)
            return ErrorCategory.INTERNAL.id

    def _parse_arguments(self, argv: Optional[List[str]]) -> argparse.Namespace:
        common = argparse.ArgumentParser(add_help=False)

        configuration = common.add_argument_group("配置")
        configuration.add_argument("--config", help="配置文件路径（默认 config/config.ini 或 $VPF_CONFIG_FILE）")
        configuration.add_argument("--set", action="append", dest="overrides", default=[],
                                   metavar="SECTION.key=value", help="覆盖配置项，可重复")
        configuration.add_argument("--run-dir", dest="run_dir", help="运行目录（默认 <runs_root>/<stamp>_<command>）")

        fields = common.add_argument_group("常用配置项")
        fields.add_argument("--dataset-root", dest="dataset_root")
        fields.add_argument("--backbone", choices=["tiny", "resnet50"])
        fields.add_argument("--fusion-mode", dest="fusion_mode", choices=["probabilistic", "attention", "addition"])
        fields.add_argument("--prior-condition", dest="prior_condition",
                            choices=["none", "illumination", "category", "both"])
        fields.add_argument("--beta", type=float)
        fields.add_argument("--lr", type=float)
        fields.add_argument("--weight-decay", dest="weight_decay", type=float)
        fields.add_argument("--epochs", type=int)
        fields.add_argument("--batch-size", dest="batch_size", type=int)
        fields.add_argument("--seed", type=int)
        fields.add_argument("--precision", choices=["float32", "float64"])
        fields.add_argument("--num-samples", dest="num_samples", type=int, help="推理采样次数 N_s")
        fields.add_argument("--missing-modality", dest="missing_modality", choices=["none", "rgb", "thermal"],
                            help="被置零的模态")

        parser = argparse.ArgumentParser(description="VPFNet RGB-T 语义分割")
        parser.add_argument("--version", action="version", version=f"vpfnet v{__version__}")
        sub = parser.add_subparsers(dest="command", required=True)

        generate = sub.add_parser("generate", parents=[common], help="生成或转换数据集")
        generate.add_argument("--force", action="store_true", help="覆盖非空的目标目录")
        generate.add_argument("--source", choices=["synthetic", "mfnet", "pst900"], default="synthetic")
        generate.add_argument("--source-root", dest="source_root", help="MFNet / PST900 原始数据目录")

        train = sub.add_parser("train", parents=[common], help="训练")
        train.add_argument("--resume", help="从检查点继续训练")

        evaluate = sub.add_parser("eval", parents=[common], help="评估")
        evaluate.add_argument("--checkpoint", required=True)
        evaluate.add_argument("--split", choices=["train", "val", "test"])
        evaluate.add_argument("--robustness", action="store_true", help="缺失模态评估（RGB-only / thermal-only / 最差）")

        infer = sub.add_parser("infer", parents=[common], help="单对图像推理")
        infer.add_argument("--checkpoint", required=True)
        infer.add_argument("--rgb", help="RGB 图像路径")
        infer.add_argument("--thermal", help="热红外图像路径")
        infer.add_argument("--output", help="输出目录（默认运行目录）")
        infer.add_argument("--no-maps", dest="maps", action="store_false", help="不导出潜变量诊断图")

        ablate = sub.add_parser("ablate", parents=[common], help="消融实验")
        ablate.add_argument("--axis", required=True, choices=AblationAxis.names())
        ablate.add_argument("--grid", default="config/ablation.ini", help="消融网格文件")

        return parser.parse_args(argv)

    def _build_config(self) -> RunConfig:
        manager = ConfigManager(self.args.config)
        manager.apply_overrides(self.args.overrides)
        for flag, (section, key) in FLAG_FIELDS.items():
            value = getattr(self.args, flag, None)
            if value is not None:
                manager.set(section, key, str(value))
        if getattr(self.args, "resume", None):
            manager.set("TRAIN", "resume", self.args.resume)
        if getattr(self.args, "split", None):
            manager.set("EVAL", "split", self.args.split)
        if getattr(self.args, "robustness", False):
            manager.set("EVAL", "modality_robustness", "true")
        return manager.run_config(for_generation=self.args.command == "generate"
                                  and getattr(self.args, "source", "synthetic") == "synthetic")

    def _session(self, config: RunConfig) -> RunSession:
        return RunSession(config, self.args.command, self.args.run_dir)

    def _print_banner(self, message: str) -> None:
        self.logger.info(f"\n{self.banner}")
        self.logger.info(f"{message} - vpfnet v{__version__}")
        self.logger.info(f"{self.banner}\n")

    @time_logger
    def cmd_generate(self, config: RunConfig) -> int:
        self._print_banner(f"generate ({self.args.source})")
        target = Path(config.data.dataset_root)
        with self._session(config) as session:
            if self.args.source == "synthetic":
                data = config.data
                generator = SyntheticDatasetGenerator(GeneratorConfig(
                    size=data.image_size, n_samples=data.n_samples, num_classes=data.num_classes,
                    seed=config.train.seed, split_fractions=data.split_fractions,
                    night_fraction=data.night_fraction,
                ).validate())
                report = generator.generate(target, force=self.args.force)
                write_histogram(session.path("histogram.csv"), report.histogram, data.class_names or None)
                counts = report.split_counts
            else:
                if not self.args.source_root:
                    raise DataError(f"--source-root is required for --source {self.args.source}")
                if self.args.source == "mfnet":
                    spec = convert_mfnet(self.args.source_root, target, config.data.include_flipped,
                                         self.args.force, config.data.resize)
                else:
                    spec = convert_pst900(self.args.source_root, target, self.args.force,
                                          config.data.resize or (640, 1280))
                manager = DatasetManager(spec)
                write_histogram(session.path("histogram.csv"), manager.label_histogram("train"), spec.class_names)
                counts = {split: len(manager.ids(split)) for split in ("train", "val", "test")}
            self.logger.info(f"dataset ready at {target}: {counts}")
        return 0

    @time_logger
    def cmd_train(self, config: RunConfig) -> int:
        self._print_banner("train")
        with self._session(config) as session:
            trainer = Trainer(config, session.run_dir)
            history = trainer.fit()
            if history:
                last = history[-1]
                self.logger.info(f"training finished: epoch={last.epoch} step={last.step} "
                                 f"total={last.total:.6f} best val mIoU={trainer.best_miou}")
        return 0

    @time_logger
    def cmd_eval(self, config: RunConfig) -> int:
        self._print_banner("eval")
        with self._session(config) as session:
            model = load_model(self.args.checkpoint, config)
            manager = DatasetManager(config.data.dataset_spec())
            evaluator = Evaluator(model, manager, config.eval.batch_size, config.exclude_background,
                                  config.torch_dtype)
            e = config.eval
            report = evaluator.evaluate(e.split, e.num_samples, e.sample_seed, missing=e.missing_modality)
            summaries = dict(report.summaries)
            if e.modality_robustness:
                for name, sub_report in evaluator.evaluate_missing_modality(e.split, e.num_samples,
                                                                             e.sample_seed).items():
                    for subset, summary in sub_report.summaries.items():
                        summaries[f"{name}.{subset}"] = summary
            header = {"checkpoint": self.args.checkpoint, "split": e.split, "num_samples": e.num_samples,
                      "missing_modality": e.missing_modality.name_value if e.missing_modality else "none",
                      "images": report.num_images}
            MetricsReporter(session.run_dir).write(summaries, per_class=e.per_class_table, header=header)
        return 0

    def _read_input(self, path: Optional[str], gray: bool, config: RunConfig) -> Optional[torch.Tensor]:
        if not path:
            return None
        image = read_gray(path) if gray else read_rgb(path)
        if config.data.resize:
            image = resize_image(image, config.data.resize)
        return image.unsqueeze(0).to(config.torch_dtype)

    @time_logger
    def cmd_infer(self, config: RunConfig) -> int:
        self._print_banner("infer")
        with self._session(config) as session:
            model = load_model(self.args.checkpoint, config)
            rgb = self._read_input(self.args.rgb, False, config)
            thermal = self._read_input(self.args.thermal, True, config)
            output_dir = Path(self.args.output) if self.args.output else session.run_dir
            stem = Path(self.args.rgb or self.args.thermal or "input").stem
            e = config.eval
            if rgb is None or thermal is None:
                result = model.infer_missing_modality(rgb, thermal, e.num_samples, e.sample_seed)
            else:
                result = model.infer_averaged(rgb, thermal, e.num_samples, e.sample_seed)
            write_label(output_dir / f"{stem}_label.png", result.labels[0])
            arrays = {"confidence": result.confidence[0].cpu().numpy(), "labels": result.labels[0].cpu().numpy()}
            if self.args.maps and model.fusion_mode != FusionMode.ADDITION:
                arrays.update(self._export_maps(model, rgb, thermal, output_dir, stem))
            np.savez(output_dir / f"{stem}_outputs.npz", **arrays)
            self.logger.info(f"inference written to {output_dir} (N_s={e.num_samples}, "
                             f"classes present={sorted(set(result.labels[0].flatten().tolist()))})")
        return 0

    def _export_maps(self, model: VPFNet, rgb: Optional[torch.Tensor], thermal: Optional[torch.Tensor],
                     output_dir: Path, stem: str) -> dict:
        """各层融合系数 W 与通道平均的潜变量均值 / 方差图"""
        if rgb is None:
            rgb = thermal.new_zeros((thermal.shape[0], 3) + tuple(thermal.shape[-2:]))
        if thermal is None:
            thermal = rgb.new_zeros((rgb.shape[0], 1) + tuple(rgb.shape[-2:]))
        arrays = {}
        with torch.no_grad():
            output = model(rgb, thermal, mode=SampleMode.POSTERIOR_MEAN)
        for level, (factor, posterior) in enumerate(zip(output.factors, output.posteriors)):
            if factor is not None:
                write_gray(output_dir / f"{stem}_W{level}.png", factor[0].clamp(0.0, 1.0))
                arrays[f"W{level}"] = factor[0].cpu().numpy()
            if posterior is not None:
                mean_map = posterior.mean[0].mean(dim=0, keepdim=True)
                variance_map = posterior.variance[0].mean(dim=0, keepdim=True)
                write_gray(output_dir / f"{stem}_mean{level}.png", normalize_map(mean_map))
                write_gray(output_dir / f"{stem}_var{level}.png", normalize_map(variance_map))
                arrays[f"M{level}"] = posterior.mean[0].cpu().numpy()
                arrays[f"V{level}"] = posterior.variance[0].cpu().numpy()
        return arrays

    @time_logger
    def cmd_ablate(self, config: RunConfig) -> int:
        axis = AblationAxis.parse(self.args.axis)
        self._print_banner(f"ablate {axis.name_value}")
        if config.data.kind != DatasetKind.SYNTHETIC:
            self.logger.warning(f"ablation grids are meant for the synthetic dataset, running on {config.data.kind}")
        with self._session(config) as session:
            table = AblationRunner(config, session.run_dir, self.args.grid).run(axis)
            self.logger.info(f"ablation {axis.name_value}: {len(table)} configurations")
        return 0


def main():
    """主函数"""
    start = time.time()
    exit_code = VpfRunner().run()
    Logger().get_logger().debug(f"exit code {exit_code} after {time.time() - start:.2f}s")
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
