"""分割网络"""
from .backbone import Backbone, build_backbone, tiny_backbone, resnet50_backbone, TINY_CHANNELS, RESNET50_CHANNELS
from .decoder import SkipDecoder
from .vpfnet import VPFNet, NetworkSpec, build_network, INPUT_MULTIPLE

__all__ = [
    'Backbone', 'build_backbone', 'tiny_backbone', 'resnet50_backbone', 'TINY_CHANNELS', 'RESNET50_CHANNELS',
    'SkipDecoder', 'VPFNet', 'NetworkSpec', 'build_network', 'INPUT_MULTIPLE',
]
