"""报告器模块"""
from .metrics_reporter import MetricsReporter, write_ablation_table

__all__ = ['MetricsReporter', 'write_ablation_table']
