from .logger import Logger

# 创建默认日志实例
default_logger = Logger(name="vpfnet").get_logger()

# 导出常用的日志方法
debug = default_logger.debug
info = default_logger.info
warning = default_logger.warning
error = default_logger.error
critical = default_logger.critical

__all__ = [
    "Logger",
    "debug", "info", "warning", "error", "critical",
]
