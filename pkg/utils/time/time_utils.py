# !/usr/bin/env python3
# -*- coding:utf-8 -*-
"""时间相关工具"""
import datetime


def run_stamp():
    """运行目录名前缀，精确到毫秒，如 20240621_093200_123"""
    now = datetime.datetime.now()
    return f"{now:%Y%m%d_%H%M%S}_{now.microsecond // 1000:03d}"


def format_duration(seconds: float) -> str:
    """秒数格式化为 1h02m03.4s / 2m03.4s / 3.4s"""
    minutes, secs = divmod(float(seconds), 60.0)
    hours, minutes = divmod(int(minutes), 60)
    if hours:
        return f"{hours}h{minutes:02d}m{secs:04.1f}s"
    if minutes:
        return f"{minutes}m{secs:04.1f}s"
    return f"{secs:.1f}s"
