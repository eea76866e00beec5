"""配置管理模块"""
from .config_manager import (
    ConfigManager, RunConfig, DataConfig, ModelConfig, LossConfig, TrainConfig, EvalConfig, LogConfig,
    RunOptions, MyConfigParser, load_ablation_grid, parse_value, format_value,
)

__all__ = [
    'ConfigManager', 'RunConfig', 'DataConfig', 'ModelConfig', 'LossConfig', 'TrainConfig', 'EvalConfig',
    'LogConfig', 'RunOptions', 'MyConfigParser', 'load_ablation_grid', 'parse_value', 'format_value',
]
