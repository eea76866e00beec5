"""文件读写：PNG、检查点存档、类别权重缓存"""
from .png_io import (
    read_rgb, read_gray, read_rgbt, read_label, write_rgb, write_gray, write_label, write_uint8,
    to_unit_tensor, to_uint8, normalize_map,
)
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint, import_backbone_weights, FORMAT_VERSION
from .weights_cache import write_class_weights, read_class_weights

__all__ = [
    'read_rgb', 'read_gray', 'read_rgbt', 'read_label', 'write_rgb', 'write_gray', 'write_label', 'write_uint8',
    'to_unit_tensor', 'to_uint8', 'normalize_map',
    'Checkpoint', 'save_checkpoint', 'load_checkpoint', 'import_backbone_weights', 'FORMAT_VERSION',
    'write_class_weights', 'read_class_weights',
]
