import time
from functools import wraps

from common.log import Logger
from utils.time.time_utils import format_duration

logger = Logger().get_logger()


def time_logger(func):
    """装饰器：记录子命令与训练轮次的耗时，异常退出时同样记录"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        failed = True
        try:
            result = func(*args, **kwargs)
            failed = False
            return result
        finally:
            outcome = "failed" if failed else "finished"
            logger.info(f"{func.__qualname__} {outcome} in {format_duration(time.perf_counter() - start_time)}")
    return wrapper
