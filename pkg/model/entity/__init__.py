"""实体模型包

此包包含所有实体模型类和数据结构定义
"""
from .fusion import LatentPosterior, LatentSample, FusionResult, PixelConditionMap, LOG_VARIANCE_CLAMP
from .segmentation import SegmentationOutput, NetworkOutput, ClassWeights, LossBreakdown
from .data import SamplePair, DatasetSpec, SPLITS
from .report import MetricsSummary, OracleReport, MonteCarloEstimate

__all__ = [
    'LatentPosterior', 'LatentSample', 'FusionResult', 'PixelConditionMap', 'LOG_VARIANCE_CLAMP',
    'SegmentationOutput', 'NetworkOutput', 'ClassWeights', 'LossBreakdown',
    'SamplePair', 'DatasetSpec', 'SPLITS',
    'MetricsSummary', 'OracleReport', 'MonteCarloEstimate',
]
