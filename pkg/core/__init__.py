"""Core模块 - RGB-T 变分融合语义分割的核心组件"""

__version__ = "1.0.0"
__author__ = "VPFNet Developers"

# 导出主要组件
from .config import ConfigManager, RunConfig

__all__ = [
    'ConfigManager',
    'RunConfig',
]
