"""评价指标"""
from .confusion import ConfusionMatrix, accumulate, summarize

__all__ = ['ConfusionMatrix', 'accumulate', 'summarize']
