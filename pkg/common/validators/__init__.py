from .tensor_checks import check_finite, check_same_shape, check_labels

__all__ = ['check_finite', 'check_same_shape', 'check_labels']
