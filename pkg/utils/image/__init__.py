from .transforms import (
    resize_image, resize_label, resize_sample, augment, sample_augmentation, apply_augmentation,
    AugmentParams, CropWindow,
)

__all__ = [
    'resize_image', 'resize_label', 'resize_sample', 'augment', 'sample_augmentation', 'apply_augmentation',
    'AugmentParams', 'CropWindow',
]
