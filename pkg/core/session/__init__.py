"""运行会话管理模块"""
from .run_session import RunSession

__all__ = ['RunSession']
