"""融合模块"""
from .vffm import VariationalFeatureFusion, sample_latent, fuse, LEAKY_SLOPE

__all__ = ['VariationalFeatureFusion', 'sample_latent', 'fuse', 'LEAKY_SLOPE']
