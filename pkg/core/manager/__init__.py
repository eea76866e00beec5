"""数据集管理模块"""
from .dataset_manager import DatasetManager, SegmentationDataset, collate_samples, read_manifest
from .dataset_adapters import convert_mfnet, convert_pst900, mfnet_illumination, MFNET_CLASSES, PST900_CLASSES

__all__ = [
    'DatasetManager', 'SegmentationDataset', 'collate_samples', 'read_manifest',
    'convert_mfnet', 'convert_pst900', 'mfnet_illumination', 'MFNET_CLASSES', 'PST900_CLASSES',
]
