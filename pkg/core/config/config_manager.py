"""配置管理模块

config/config.ini 中每个 section 对应一个 dataclass：
[DATA] [MODEL] [LOSS] [TRAIN] [EVAL] [LOG] [RUN]，合并为 RunConfig。
配置文件路径优先级：参数 > 环境变量 VPF_CONFIG_FILE > 默认 config/config.ini
"""
import configparser
import dataclasses
import io
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from dotenv import load_dotenv

from common.errors import ConfigError
from common.log.logger import Logger
from core.network.vpfnet import NetworkSpec
from model.entity import DatasetSpec
from model.enum import (BaseIdNameEnum, BackboneVariant, DatasetKind, FusionMode, Modality, Precision,
                        PriorCondition)

logger = Logger().get_logger()

DEFAULT_CONFIG_FILE = 'config/config.ini'
CONFIG_ENV = 'VPF_CONFIG_FILE'


@dataclass
class DataConfig:
    """数据集配置类"""
    dataset_root: str = 'data/synthetic'
    kind: DatasetKind = DatasetKind.SYNTHETIC
    num_classes: int = 4
    class_names: List[str] = field(default_factory=list)
    resize: Optional[Tuple[int, int]] = None
    include_flipped: bool = False
    image_size: Tuple[int, int] = (64, 64)
    n_samples: int = 800
    split_fractions: Tuple[float, float, float] = (0.75, 0.125, 0.125)
    night_fraction: float = 0.5
    crop_fraction: float = 0.9
    flip_prob: float = 0.5
    num_workers: int = 0

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(root=Path(self.dataset_root), num_classes=self.num_classes,
                           class_names=list(self.class_names), resize=self.resize, kind=self.kind)


@dataclass
class ModelConfig:
    """网络结构配置类"""
    backbone: BackboneVariant = BackboneVariant.TINY
    kernel_size: int = 7
    squeeze_ratio: int = 16
    latent_dim: int = 8
    num_illuminations: int = 2
    fusion_mode: FusionMode = FusionMode.PROBABILISTIC
    prior_condition: PriorCondition = PriorCondition.BOTH
    skip0_after_final_upsample: bool = False
    backbone_weights: str = ''


@dataclass
class LossConfig:
    """损失配置类"""
    beta: float = 0.5
    class_weight_k: float = 1.02
    weighted: bool = True


@dataclass
class TrainConfig:
    """训练配置类"""
    optimizer: str = 'adamw'
    lr: float = 5e-5
    weight_decay: float = 5e-4
    epochs: int = 300
    batch_size: int = 3
    seed: int = 0
    precision: Precision = Precision.FLOAT32
    resume: str = ''


@dataclass
class EvalConfig:
    """评估配置类"""
    num_samples: int = 1
    sample_seed: int = 0
    split: str = 'test'
    # None 表示按数据集取默认值：MFNet 排除背景，其余包含
    exclude_background: Optional[bool] = None
    missing_modality: Optional[Modality] = None
    modality_robustness: bool = False
    per_class_table: bool = True
    batch_size: int = 4


@dataclass
class LogConfig:
    """日志配置类"""
    level: str = 'INFO'
    rotation: str = '00:00'
    retention: str = '30 days'
    compression: str = 'zip'
    path: str = 'logs'


@dataclass
class RunOptions:
    """运行目录配置类"""
    runs_root: str = 'runs'


SECTIONS = {
    'DATA': ('data', DataConfig),
    'MODEL': ('model', ModelConfig),
    'LOSS': ('loss', LossConfig),
    'TRAIN': ('train', TrainConfig),
    'EVAL': ('eval', EvalConfig),
    'LOG': ('log', LogConfig),
    'RUN': ('run', RunOptions),
}


@dataclass
class RunConfig:
    """一次运行的完整配置"""
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    log: LogConfig = field(default_factory=LogConfig)
    run: RunOptions = field(default_factory=RunOptions)

    @property
    def effective_beta(self) -> float:
        """无潜变量或无先验的配置下 KL 项关闭"""
        if self.model.fusion_mode != FusionMode.PROBABILISTIC or self.model.prior_condition == PriorCondition.NONE:
            return 0.0
        return self.loss.beta

    def network_spec(self) -> NetworkSpec:
        m = self.model
        return NetworkSpec(
            num_classes=self.data.num_classes, backbone=m.backbone, kernel_size=m.kernel_size,
            squeeze_ratio=m.squeeze_ratio, latent_dim=m.latent_dim, num_illuminations=m.num_illuminations,
            fusion_mode=m.fusion_mode, prior_condition=m.prior_condition,
            skip0_after_final_upsample=m.skip0_after_final_upsample,
        )

    @property
    def exclude_background(self) -> bool:
        if self.eval.exclude_background is not None:
            return self.eval.exclude_background
        return self.data.kind == DatasetKind.MFNET

    @property
    def torch_dtype(self):
        import torch
        return torch.float64 if self.train.precision == Precision.FLOAT64 else torch.float32

    def validate(self, for_generation: bool = False) -> 'RunConfig':
        """在开始任何工作之前检查取值范围"""
        problems = []
        d, m, lo, t, e = self.data, self.model, self.loss, self.train, self.eval

        def require(condition: bool, message: str):
            if not condition:
                problems.append(message)

        require(m.kernel_size >= 1 and m.kernel_size % 2 == 1, f"MODEL.kernel_size must be odd and >= 1 (got {m.kernel_size})")
        require(m.squeeze_ratio >= 1, f"MODEL.squeeze_ratio must be >= 1 (got {m.squeeze_ratio})")
        require(m.latent_dim >= 1, f"MODEL.latent_dim must be >= 1 (got {m.latent_dim})")
        require(m.num_illuminations >= 1, f"MODEL.num_illuminations must be >= 1 (got {m.num_illuminations})")
        require(lo.beta >= 0, f"LOSS.beta must be >= 0 (got {lo.beta})")
        require(lo.class_weight_k > 1, f"LOSS.class_weight_k must be > 1 (got {lo.class_weight_k})")
        require(d.num_classes >= 2, f"DATA.num_classes must be >= 2 (got {d.num_classes})")
        if for_generation:
            require(d.num_classes >= 3, f"synthetic generation needs DATA.num_classes >= 3 (got {d.num_classes})")
            require(d.n_samples >= 1, f"DATA.n_samples must be >= 1 (got {d.n_samples})")
        require(not d.class_names or len(d.class_names) == d.num_classes,
                f"DATA.class_names has {len(d.class_names)} names for {d.num_classes} classes")
        require(0 < d.crop_fraction <= 1, f"DATA.crop_fraction must be in (0, 1] (got {d.crop_fraction})")
        require(0 <= d.flip_prob <= 1, f"DATA.flip_prob must be in [0, 1] (got {d.flip_prob})")
        require(0 <= d.night_fraction <= 1, f"DATA.night_fraction must be in [0, 1] (got {d.night_fraction})")
        require(len(d.split_fractions) == 3 and abs(sum(d.split_fractions) - 1.0) < 1e-9
                and min(d.split_fractions) >= 0,
                f"DATA.split_fractions must be 3 nonnegative values summing to 1 (got {d.split_fractions})")
        require(d.num_workers >= 0, f"DATA.num_workers must be >= 0 (got {d.num_workers})")
        require(e.num_samples >= 1, f"EVAL.num_samples must be >= 1 (got {e.num_samples})")
        require(e.batch_size >= 1, f"EVAL.batch_size must be >= 1 (got {e.batch_size})")
        require(e.split in ('train', 'val', 'test'), f"EVAL.split must be train, val or test (got {e.split})")
        require(t.lr > 0, f"TRAIN.lr must be > 0 (got {t.lr})")
        require(t.weight_decay >= 0, f"TRAIN.weight_decay must be >= 0 (got {t.weight_decay})")
        require(t.epochs >= 1, f"TRAIN.epochs must be >= 1 (got {t.epochs})")
        require(t.batch_size >= 1, f"TRAIN.batch_size must be >= 1 (got {t.batch_size})")
        for size_name, size in (("DATA.image_size", d.image_size), ("DATA.resize", d.resize)):
            if size is not None:
                require(all(s > 0 and s % 32 == 0 for s in size),
                        f"{size_name} must be positive multiples of 32 (got {size})")
        if problems:
            raise ConfigError("; ".join(problems), problems=problems)
        return self

    def to_ini(self) -> str:
        """回显为 INI 文本，与 from_ini 互逆"""
        parser = MyConfigParser()
        for section, (attr, _) in SECTIONS.items():
            parser.add_section(section)
            for f in dataclasses.fields(getattr(self, attr)):
                parser[section][f.name] = format_value(getattr(getattr(self, attr), f.name))
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> 'RunConfig':
        parser = MyConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse configuration: {e}") from e
        return build_run_config(parser)

    def replace(self, **sections) -> 'RunConfig':
        """按 section 名替换部分字段，例如 replace(loss={'beta': 0.0})"""
        updated = {}
        for attr, changes in sections.items():
            updated[attr] = dataclasses.replace(getattr(self, attr), **changes)
        return dataclasses.replace(self, **updated)


"""
解决configparser读取参数会自动将大写字母转换为小写的问题
重载optionxform方法
"""
class MyConfigParser(configparser.ConfigParser):
    def __init__(self, defaults=None):
        super().__init__(defaults=defaults, interpolation=None)

    def optionxform(self, optionstr):
        return optionstr


def _unwrap_optional(annotation) -> Tuple[Any, bool]:
    if typing.get_origin(annotation) is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        return args[0], True
    return annotation, False


def parse_value(annotation, text: str) -> Any:
    """按字段类型把 INI 文本解析为 Python 值"""
    annotation, optional = _unwrap_optional(annotation)
    text = text.strip()
    if optional and text.lower() in ('', 'none'):
        return None
    origin = typing.get_origin(annotation)
    if origin in (tuple, list):
        item_type = typing.get_args(annotation)[0]
        parts = [p for p in text.replace('x', ',').split(',') if p.strip()] if item_type is int \
            else [p for p in text.split(',') if p.strip()]
        values = [parse_value(item_type, p) for p in parts]
        if origin is tuple:
            expected = len(typing.get_args(annotation))
            if expected != len(values):
                raise ValueError(f"expected {expected} values, got {len(values)}")
            return tuple(values)
        return values
    if isinstance(annotation, type) and issubclass(annotation, BaseIdNameEnum):
        return annotation.parse(text)
    if annotation is bool:
        lowered = text.lower()
        if lowered in ('1', 'true', 'yes', 'on'):
            return True
        if lowered in ('0', 'false', 'no', 'off'):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if annotation is int:
        return int(text)
    if annotation is float:
        return float(text)
    return text


def format_value(value: Any) -> str:
    if value is None:
        return 'none'
    if isinstance(value, BaseIdNameEnum):
        return value.name_value
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ', '.join(format_value(v) for v in value)
    return str(value)


def _section_config(parser: configparser.ConfigParser, section: str, config_type):
    hints = typing.get_type_hints(config_type)
    known = {f.name for f in dataclasses.fields(config_type)}
    values = {}
    if parser.has_section(section):
        for key, text in parser.items(section, raw=True):
            if key in parser.defaults():
                continue
            if key not in known:
                raise ConfigError(f"unknown configuration key {section}.{key}")
            try:
                values[key] = parse_value(hints[key], text)
            except ValueError as e:
                raise ConfigError(f"invalid value for {section}.{key}: {text!r} ({e})") from e
    return config_type(**values)


def build_run_config(parser: configparser.ConfigParser) -> RunConfig:
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown configuration sections: {unknown}")
    return RunConfig(**{attr: _section_config(parser, section, config_type)
                        for section, (attr, config_type) in SECTIONS.items()})


class ConfigManager:
    """配置管理器：读取 INI 文件，应用命令行覆盖，产出校验后的 RunConfig"""

    def __init__(self, config_file: Optional[str] = None):
        load_dotenv(override=False)
        explicit = config_file or os.environ.get(CONFIG_ENV)
        self.config_file = explicit or DEFAULT_CONFIG_FILE
        self._config = MyConfigParser()
        self._load_config(required=bool(explicit))

    def _load_config(self, required: bool):
        """加载配置文件"""
        if not os.path.exists(self.config_file):
            if required:
                raise ConfigError(f"配置文件不存在: {self.config_file}")
            logger.warning(f"配置文件不存在: {self.config_file}，将使用默认配置")
            return
        try:
            self._config.read(self.config_file, encoding='utf-8')
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {self.config_file}: {e}") from e
        logger.debug(f"已加载配置文件: {self.config_file}")

    def set(self, section: str, key: str, value: Any) -> None:
        section = section.upper()
        if section not in SECTIONS:
            raise ConfigError(f"unknown configuration section '{section}'")
        _, config_type = SECTIONS[section]
        if key not in {f.name for f in dataclasses.fields(config_type)}:
            raise ConfigError(f"unknown configuration key {section}.{key}")
        if not self._config.has_section(section):
            self._config.add_section(section)
        self._config[section][key] = value if isinstance(value, str) else format_value(value)

    def apply_overrides(self, overrides: Iterable[str]) -> None:
        """应用 SECTION.key=value 形式的覆盖"""
        for item in overrides or []:
            if '=' not in item or '.' not in item.split('=', 1)[0]:
                raise ConfigError(f"override must look like SECTION.key=value, got {item!r}")
            target, value = item.split('=', 1)
            section, key = target.strip().split('.', 1)
            self.set(section, key.strip(), value.strip())
            logger.debug(f"config override {section.upper()}.{key.strip()}={value.strip()}")

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self._config.get(section.upper(), key, fallback=default)

    @property
    def log_config(self) -> LogConfig:
        """获取日志配置"""
        return _section_config(self._config, 'LOG', LogConfig)

    def run_config(self, for_generation: bool = False) -> RunConfig:
        return build_run_config(self._config).validate(for_generation=for_generation)


def load_ablation_grid(axis: str, path: str = 'config/ablation.ini') -> Dict[str, Any]:
    """读取消融网格：values 列表与 seeds 列表"""
    parser = MyConfigParser()
    if not os.path.exists(path):
        raise ConfigError(f"ablation grid file not found: {path}")
    parser.read(path, encoding='utf-8')
    if not parser.has_section(axis):
        raise ConfigError(f"no ablation grid for axis '{axis}' in {path}")
    section = parser[axis]
    values = [v.strip() for v in section.get('values', '').split(',') if v.strip()]
    if not values:
        raise ConfigError(f"ablation axis '{axis}' has no values")
    seeds = [int(s) for s in section.get('seeds', '0').split(',') if s.strip()]
    epochs = section.get('epochs')
    return {'values': values, 'seeds': seeds, 'epochs': int(epochs) if epochs else None}
