"""执行器模块：训练、评估、消融"""
from .trainer import Trainer, EpochRecord, register_optimizer, build_optimizer, OPTIMIZERS
from .evaluator import Evaluator, EvaluationReport, worst_of
from .ablation import AblationRunner

__all__ = [
    'Trainer', 'EpochRecord', 'register_optimizer', 'build_optimizer', 'OPTIMIZERS',
    'Evaluator', 'EvaluationReport', 'worst_of', 'AblationRunner',
]
