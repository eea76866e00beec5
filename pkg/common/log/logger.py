import configparser
import functools
import json
import os
import sys
import time
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

from dotenv import load_dotenv
from loguru import logger

DEFAULT_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)


@dataclass
class LogSettings:
    """日志配置，优先级：显式参数 > 环境变量 LOG_* > 配置文件 [LOG] > 默认值"""
    path: Path
    level: str = "INFO"
    rotation: str = "00:00"
    retention: str = "30 days"
    compression: str = "zip"
    format: str = DEFAULT_FORMAT

    @classmethod
    def resolve(cls, env_prefix: str = "LOG", **explicit) -> 'LogSettings':
        # .env 中的 LOG_* 变量同样生效
        load_dotenv(override=False)
        section = _read_log_section(os.environ.get("VPF_CONFIG_FILE", "config/config.ini"))

        def pick(key: str, default: str) -> str:
            return explicit.get(key) or os.environ.get(f"{env_prefix}_{key.upper()}") or section.get(key) or default

        return cls(
            path=Path(pick("path", str(Path.cwd() / "logs"))),
            level=pick("level", cls.level).upper(),
            rotation=pick("rotation", cls.rotation),
            retention=pick("retention", cls.retention),
            compression=pick("compression", cls.compression),
            format=explicit.get("format") or section.get("format") or DEFAULT_FORMAT,
        )


def _read_log_section(config_file: str) -> Dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(config_file, encoding="utf-8")
    except configparser.Error:
        return {}
    return dict(parser["LOG"]) if parser.has_section("LOG") else {}


class Logger:
    """
    项目日志工具类（loguru）
    1. 控制台彩色输出
    2. logs/ 下按天切割的常规日志，ERROR 及以上单独成文件
    3. 每次命令执行时额外挂载 <run_dir>/run.log
    4. 结构化日志（消息后附 JSON）
    5. 函数执行日志装饰器 log_execution
    """

    _instances: Dict[str, 'Logger'] = {}

    def __new__(cls, name: str = "vpfnet", *args, **kwargs):
        """单例模式，相同name返回相同实例"""
        if name not in cls._instances:
            cls._instances[name] = super().__new__(cls)
        return cls._instances[name]

    def __init__(self, name: str = "vpfnet", log_path: Union[str, Path] = None, level: Optional[str] = None,
                 colorize: bool = True, env_prefix: str = "LOG"):
        if hasattr(self, 'initialized'):
            return
        self.initialized = True

        self.name = name
        self.colorize = colorize
        self.settings = LogSettings.resolve(env_prefix, path=str(log_path) if log_path else None, level=level)
        self.settings.path.mkdir(parents=True, exist_ok=True)
        self._run_sinks: Dict[str, int] = {}

        self._configure_logger()
        self.logger = logger.bind(name=name)
        self.logger.debug(f"logger '{name}' ready, level={self.settings.level} path={self.settings.path}")

    def _owned(self, record) -> bool:
        return record["extra"].get("name") == self.name

    def _configure_logger(self):
        settings = self.settings
        logger.remove()
        logger.add(sys.stderr, format=settings.format, filter=self._owned, level=settings.level,
                   colorize=self.colorize, backtrace=True, diagnose=False)

        rolling = dict(format=settings.format, rotation=settings.rotation, retention=settings.retention,
                       compression=settings.compression, encoding="utf-8", enqueue=True)
        logger.add(str(settings.path / f"{self.name}.log"), level=settings.level,
                   filter=lambda record: self._owned(record) and record["level"].no < 40, **rolling)
        logger.add(str(settings.path / f"{self.name}_error.log"), level="ERROR",
                   filter=lambda record: self._owned(record) and record["level"].no >= 40, **rolling)

    def get_logger(self):
        """获取logger实例"""
        return self.logger

    def add_run_sink(self, run_dir: Union[str, Path], version: str) -> Path:
        """为某次运行挂载 <run_dir>/run.log，首行记录版本号"""
        run_log = Path(run_dir) / "run.log"
        run_log.parent.mkdir(parents=True, exist_ok=True)
        key = str(run_log.resolve())
        if key not in self._run_sinks:
            self._run_sinks[key] = logger.add(str(run_log), format=self.settings.format, filter=self._owned,
                                              level="DEBUG", encoding="utf-8", enqueue=False)
            self.logger.info(f"vpfnet version {version} | run log {run_log}")
        return run_log

    def remove_run_sink(self, run_dir: Union[str, Path]) -> None:
        sink_id = self._run_sinks.pop(str((Path(run_dir) / "run.log").resolve()), None)
        if sink_id is not None:
            logger.remove(sink_id)

    def log_json(self, level: str, message: str, **kwargs):
        """记录结构化日志：message | {"key": value, ...}"""
        log_func = getattr(self.logger, level.lower())
        if kwargs:
            log_func(f"{message} | {json.dumps(kwargs, ensure_ascii=False, default=str)}")
        else:
            log_func(message)

    def exception(self, message: str):
        """记录异常信息（含堆栈），需在 except 块内调用"""
        exc_type, exc_value, exc_traceback = sys.exc_info()
        if exc_type:
            stack_trace = ''.join(traceback.format_exception(exc_type, exc_value, exc_traceback))
            self.logger.error(f"{message}\n{stack_trace}")
        else:
            self.logger.error(message)

    def log_execution(self, level: str = "DEBUG", log_args: bool = True, log_result: bool = True):
        """函数执行日志装饰器：记录调用参数、返回值与耗时，异常时记录堆栈后重新抛出"""
        def decorator(func):
            @functools.wraps(func)
            def wrapper(*args, **kwargs):
                log = getattr(self.logger, level.lower())
                if log_args:
                    rendered = [_short_repr(a) for a in args] + [f"{k}={_short_repr(v)}" for k, v in kwargs.items()]
                    log(f"calling {func.__qualname__}({', '.join(rendered)})")
                else:
                    log(f"calling {func.__qualname__}()")

                start_time = time.perf_counter()
                try:
                    result = func(*args, **kwargs)
                except Exception:
                    self.exception(f"{func.__qualname__} failed after {time.perf_counter() - start_time:.4f}s")
                    raise
                elapsed = time.perf_counter() - start_time
                if log_result:
                    log(f"{func.__qualname__} completed in {elapsed:.4f}s with result: {_short_repr(result)}")
                else:
                    log(f"{func.__qualname__} completed in {elapsed:.4f}s")
                return result
            return wrapper
        return decorator


def _short_repr(obj, limit: int = 100) -> str:
    try:
        text = repr(obj)
    except Exception:
        return "<unprintable>"
    return f"{text[:limit - 3]}..." if len(text) > limit else text
