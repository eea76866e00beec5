"""损失函数"""
from .segmentation_loss import (
    compute_class_weights, weighted_cross_entropy, total_loss, level_kl,
    DEFAULT_WEIGHT_CONSTANT, NUM_LEVELS,
)

__all__ = [
    'compute_class_weights', 'weighted_cross_entropy', 'total_loss', 'level_kl',
    'DEFAULT_WEIGHT_CONSTANT', 'NUM_LEVELS',
]
