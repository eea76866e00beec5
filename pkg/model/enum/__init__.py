"""枚举定义"""
from .enums import (
    EnumValue, BaseIdNameEnum, Illumination, Modality, SampleMode, FusionMode,
    PriorCondition, BackboneVariant, Precision, DatasetKind, AblationAxis, RunStatus, ErrorCategory,
)

__all__ = [
    'EnumValue', 'BaseIdNameEnum', 'Illumination', 'Modality', 'SampleMode', 'FusionMode',
    'PriorCondition', 'BackboneVariant', 'Precision', 'DatasetKind', 'AblationAxis', 'RunStatus', 'ErrorCategory',
]
