from dataclasses import dataclass
from enum import Enum
from typing import Optional, TypeVar, Type, Any, Generic

T = TypeVar('T', bound='BaseIdNameEnum')
ID = TypeVar('ID', int, str)


@dataclass(frozen=True)
class EnumValue(Generic[ID]):
    id: ID
    name: str


class BaseIdNameEnum(Enum):
    """基础枚举类，包含id和名称属性"""

    @property
    def id(self):
        """返回枚举值的id"""
        return self.value.id

    @property
    def name_value(self):
        """返回枚举值的名称"""
        return self.value.name

    @classmethod
    def get_from_id(cls: Type[T], id_value: Any) -> Optional[T]:
        """根据id获取对应的枚举实例"""
        if id_value is None:
            return None
        for enum_item in cls:
            if enum_item.id == id_value:
                return enum_item
        return None

    @classmethod
    def get_from_value(cls: Type[T], value: str) -> Optional[T]:
        """根据名称获取对应的枚举实例（忽略大小写）"""
        if not value:
            return None
        for enum_item in cls:
            if enum_item.name_value.lower() == str(value).strip().lower():
                return enum_item
        return None

    @classmethod
    def parse(cls: Type[T], value: Any) -> T:
        """按名称或id解析，找不到时抛出ValueError"""
        if isinstance(value, cls):
            return value
        item = cls.get_from_value(value) if isinstance(value, str) else cls.get_from_id(value)
        if item is None:
            choices = ", ".join(e.name_value for e in cls)
            raise ValueError(f"unknown {cls.__name__} '{value}', expected one of: {choices}")
        return item

    @classmethod
    def names(cls) -> list:
        return [e.name_value for e in cls]

    def __eq__(self, other):
        if isinstance(other, self.__class__):
            return self is other
        elif isinstance(other, (int, str)):
            return self.id == other or self.name_value.lower() == str(other).lower()
        return NotImplemented

    __hash__ = Enum.__hash__

    def __str__(self):
        return self.name_value


class Illumination(BaseIdNameEnum):
    """场景光照条件，id即先验中的光照索引l"""
    DAY = EnumValue(0, "day")
    NIGHT = EnumValue(1, "night")


class Modality(BaseIdNameEnum):
    RGB = EnumValue(0, "rgb")
    THERMAL = EnumValue(1, "thermal")


class SampleMode(BaseIdNameEnum):
    """潜变量取值方式：随机采样 / 直接取后验均值"""
    RANDOM = EnumValue(0, "random")
    POSTERIOR_MEAN = EnumValue(1, "posterior_mean")


class FusionMode(BaseIdNameEnum):
    """融合方式：概率融合(VFFM) / 非概率注意力融合 / 逐元素相加"""
    PROBABILISTIC = EnumValue(0, "probabilistic")
    ATTENTION = EnumValue(1, "attention")
    ADDITION = EnumValue(2, "addition")


class PriorCondition(BaseIdNameEnum):
    """KL先验所使用的条件信息"""
    NONE = EnumValue(0, "none")
    ILLUMINATION = EnumValue(1, "illumination")
    CATEGORY = EnumValue(2, "category")
    BOTH = EnumValue(3, "both")


class BackboneVariant(BaseIdNameEnum):
    TINY = EnumValue(0, "tiny")
    RESNET50 = EnumValue(1, "resnet50")


class Precision(BaseIdNameEnum):
    FLOAT32 = EnumValue(32, "float32")
    FLOAT64 = EnumValue(64, "float64")


class DatasetKind(BaseIdNameEnum):
    SYNTHETIC = EnumValue(0, "synthetic")
    MFNET = EnumValue(1, "mfnet")
    PST900 = EnumValue(2, "pst900")


class AblationAxis(BaseIdNameEnum):
    BETA = EnumValue(0, "beta")
    NS = EnumValue(1, "ns")
    PRIOR = EnumValue(2, "prior")
    LOSS = EnumValue(3, "loss")
    FUSION = EnumValue(4, "fusion")
    KERNEL = EnumValue(5, "kernel")
    SQUEEZE = EnumValue(6, "squeeze")
    LATENT = EnumValue(7, "latent")


class RunStatus(BaseIdNameEnum):
    RUNNING = EnumValue(0, "RUNNING")
    COMPLETED = EnumValue(1, "COMPLETED")
    FAILED = EnumValue(2, "FAILED")


class ErrorCategory(BaseIdNameEnum):
    """错误类别，id即命令行退出码"""
    INTERNAL = EnumValue(1, "internal")
    CONFIG = EnumValue(2, "config")
    DATA = EnumValue(3, "data")
    SHAPE = EnumValue(4, "shape")
    NUMERIC = EnumValue(5, "numeric")
    RANGE = EnumValue(6, "range")
    CHECKPOINT = EnumValue(7, "checkpoint")
    DIVERGED = EnumValue(8, "diverged")
    IO = EnumValue(9, "io")
