"""运行会话管理模块

每条命令对应一个运行目录 <runs_root>/<stamp>_<command>/，会话负责：
配置回显 config.ini、运行信息 run_info.properties、状态标记 STATUS 以及 run.log。
"""
import platform
import time
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

import torch

from common.log.logger import Logger
from core.config.config_manager import RunConfig
from model.enum import RunStatus
from utils.time.time_utils import run_stamp, format_duration

_log = Logger()
logger = _log.get_logger()


class RunSession:
    """运行会话，作为上下文管理器使用；异常退出时状态标记为 FAILED"""

    def __init__(self, config: RunConfig, command: str, run_dir: Optional[Union[str, Path]] = None):
        from core import __version__
        self.config = config
        self.command = command
        self.version = __version__
        self.run_dir = Path(run_dir) if run_dir else Path(config.run.runs_root) / f"{run_stamp()}_{command}"
        self.status: Optional[RunStatus] = None
        self._start_time: Optional[float] = None

    @property
    def checkpoint_dir(self) -> Path:
        return self.run_dir / "checkpoints"

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def start(self) -> 'RunSession':
        self._start_time = time.time()
        self.run_dir.mkdir(parents=True, exist_ok=True)
        _log.add_run_sink(self.run_dir, self.version)
        logger.info(f"===== {self.command} start | run dir {self.run_dir} =====")
        self.path("config.ini").write_text(self.config.to_ini(), encoding="utf-8")
        self._write_run_info(start=True)
        self.mark(RunStatus.RUNNING)
        return self

    def mark(self, status: RunStatus) -> None:
        self.status = status
        self.path("STATUS").write_text(f"{status.name_value}\n", encoding="utf-8")

    def finish(self, status: RunStatus = RunStatus.COMPLETED) -> None:
        elapsed = time.time() - (self._start_time or time.time())
        self.mark(status)
        self._write_run_info(start=False, elapsed=elapsed)
        logger.info(f"===== {self.command} {status.name_value} (Total time: {format_duration(elapsed)}) =====")
        _log.remove_run_sink(self.run_dir)

    def _write_run_info(self, start: bool = True, elapsed: float = None) -> None:
        """写入运行属性文件"""
        info_file = self.path("run_info.properties")
        if start:
            with open(info_file, "w", encoding="utf-8") as f:
                f.write(f"VERSION={self.version}\n")
                f.write(f"COMMAND={self.command}\n")
                f.write(f"START_TIME={datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
                f.write(f"SEED={self.config.train.seed}\n")
                f.write(f"PRECISION={self.config.train.precision.name_value}\n")
                f.write(f"TORCH_VERSION={torch.__version__}\n")
                f.write(f"PYTHON_VERSION={platform.python_version()}\n")
        else:
            with open(info_file, "a", encoding="utf-8") as f:
                f.write(f"END_TIME={datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
                f.write(f"DURATION={elapsed:.2f}s\n")
                f.write(f"STATUS={self.status.name_value}\n")

    def __enter__(self) -> 'RunSession':
        return self.start()

    def __exit__(self, exc_type, exc_value, traceback) -> bool:
        if exc_type is not None:
            logger.opt(exception=(exc_type, exc_value, traceback)).error(f"{self.command} failed: {exc_value}")
        self.finish(RunStatus.COMPLETED if exc_type is None else RunStatus.FAILED)
        return False
