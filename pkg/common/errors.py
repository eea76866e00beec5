"""异常定义

所有业务异常都继承自 VpfError，并携带一个 ErrorCategory，命令行据此输出
一行 ``error=<category> message=<text>`` 并以类别 id 作为退出码。
"""
from model.enum import ErrorCategory


class VpfError(Exception):
    """业务异常基类"""
    category: ErrorCategory = ErrorCategory.INTERNAL

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def one_line(self) -> str:
        """机器可解析的一行错误描述"""
        text = " ".join(str(self.message).split())
        return f"error={self.category.name_value} message={text}"


class ConfigError(VpfError, ValueError):
    category = ErrorCategory.CONFIG


class DataError(VpfError, ValueError):
    category = ErrorCategory.DATA


class DataFileNotFoundError(VpfError, FileNotFoundError):
    category = ErrorCategory.IO


class ShapeMismatchError(VpfError, ValueError):
    category = ErrorCategory.SHAPE


class NonFiniteError(VpfError, FloatingPointError):
    category = ErrorCategory.NUMERIC


class OutOfRangeError(VpfError, ValueError):
    category = ErrorCategory.RANGE


class CheckpointError(VpfError, ValueError):
    category = ErrorCategory.CHECKPOINT


class TrainingDivergedError(VpfError, FloatingPointError):
    category = ErrorCategory.DIVERGED
