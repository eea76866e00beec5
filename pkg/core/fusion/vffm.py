"""变分特征融合模块 (VFFM)

RGB / 热红外同层特征拼接后经 Conv_s + BN + LeakyReLU 得到中间融合特征，
由两个独立的 1×1 头给出潜变量 Z 的均值与对数方差，重参数化采样后经
1×1 卷积 + Sigmoid 生成单通道融合因子 W，最后做凸组合：

    fused = W · F_R + (1 − W) · F_T
"""
from typing import Optional

import torch
from torch import nn
import torch.nn.functional as F

from common.errors import ShapeMismatchError, NonFiniteError, OutOfRangeError, ConfigError
from model.entity import LatentPosterior, LatentSample, FusionResult
from model.enum import SampleMode, FusionMode

LEAKY_SLOPE = 0.2


def sample_latent(posterior: LatentPosterior, mode: SampleMode = SampleMode.POSTERIOR_MEAN,
                  generator: Optional[torch.Generator] = None,
                  seed: Optional[int] = None) -> LatentSample:
    """重参数化采样 z = M + exp(0.5·logV) ⊙ ε

    随机模式必须显式给出 generator 或 seed，不使用全局随机状态
    """
    mode = SampleMode.parse(mode)
    if mode == SampleMode.POSTERIOR_MEAN:
        return LatentSample(posterior.mean, SampleMode.POSTERIOR_MEAN)

    if generator is None:
        if seed is None:
            raise ConfigError("random latent sampling requires a seed or a generator")
        generator = torch.Generator().manual_seed(int(seed))
    mean = posterior.mean
    noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype, device=generator.device)
    noise = noise.to(mean.device)
    return LatentSample(mean + posterior.std * noise, SampleMode.RANDOM, seed)


def fuse(f_rgb: torch.Tensor, f_thermal: torch.Tensor, factor: torch.Tensor) -> torch.Tensor:
    """按融合因子图做凸组合，factor 形状 (B, 1, H, W) 沿通道广播"""
    if f_rgb.shape != f_thermal.shape:
        raise ShapeMismatchError("modality shape mismatch",
                                 rgb=tuple(f_rgb.shape), thermal=tuple(f_thermal.shape))
    if factor.shape[-2:] != f_rgb.shape[-2:]:
        raise ShapeMismatchError(
            f"fusion factor spatial shape {tuple(factor.shape[-2:])} does not match feature {tuple(f_rgb.shape[-2:])}"
        )
    if not torch.isfinite(factor).all() or (factor < 0).any() or (factor > 1).any():
        raise OutOfRangeError("invalid fusion factor")

    blended = factor * f_rgb + (1.0 - factor) * f_thermal
    # 舍入误差可能越出包络，这里按元素夹回 [min, max]
    lower = torch.minimum(f_rgb, f_thermal)
    upper = torch.maximum(f_rgb, f_thermal)
    blended = torch.where(blended > upper, upper, blended)
    blended = torch.where(blended < lower, lower, blended)
    # W 恰为 1 / 0 时直接取对应模态，保持逐位相等（含 -0.0）
    blended = torch.where(factor == 1, f_rgb, blended)
    return torch.where(factor == 0, f_thermal, blended)


class VariationalFeatureFusion(nn.Module):
    """单层的变分特征融合模块

    Args:
        channels: 每个模态的特征通道数 C_f
        kernel_size: Conv_s 的核大小 s（奇数）
        squeeze_ratio: 压缩比 r，中间特征通道数为 2·C_f / r
        latent_dim: 潜变量通道数 d
        mode: 融合方式；attention 只保留均值头，addition 不含任何参数
    """

    def __init__(self, channels: int, kernel_size: int = 7, squeeze_ratio: int = 16,
                 latent_dim: int = 8, mode: FusionMode = FusionMode.PROBABILISTIC):
        super().__init__()
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd and >= 1, got {kernel_size}")
        self.channels = channels
        self.kernel_size = kernel_size
        self.squeeze_ratio = squeeze_ratio
        self.latent_dim = latent_dim
        self.mode = FusionMode.parse(mode)
        self.hidden_channels = max(1, (2 * channels) // squeeze_ratio)

        if self.mode == FusionMode.ADDITION:
            return

        self.squeeze_conv = nn.Conv2d(2 * channels, self.hidden_channels, kernel_size,
                                      stride=1, padding=(kernel_size - 1) // 2, bias=False)
        self.norm = nn.BatchNorm2d(self.hidden_channels)
        self.mean_head = nn.Conv2d(self.hidden_channels, latent_dim, 1)
        if self.mode == FusionMode.PROBABILISTIC:
            self.logvar_head = nn.Conv2d(self.hidden_channels, latent_dim, 1)
            nn.init.zeros_(self.logvar_head.bias)
        self.factor_head = nn.Conv2d(latent_dim, 1, 1)

    @property
    def is_probabilistic(self) -> bool:
        return self.mode == FusionMode.PROBABILISTIC

    def compute_intermediate(self, f_rgb: torch.Tensor, f_thermal: torch.Tensor) -> torch.Tensor:
        """σ_L(BN(Conv_s(Cat(F_R, F_T))))，空间尺寸不变"""
        if f_rgb.shape != f_thermal.shape:
            raise ShapeMismatchError("modality shape mismatch",
                                     rgb=tuple(f_rgb.shape), thermal=tuple(f_thermal.shape))
        if f_rgb.shape[1] != self.channels:
            raise ShapeMismatchError(f"expected {self.channels} feature channels, got {f_rgb.shape[1]}")
        if not (torch.isfinite(f_rgb).all() and torch.isfinite(f_thermal).all()):
            raise NonFiniteError("non-finite modality feature")
        stacked = torch.cat([f_rgb, f_thermal], dim=1)
        return F.leaky_relu(self.norm(self.squeeze_conv(stacked)), negative_slope=LEAKY_SLOPE)

    def posterior_params(self, intermediate: torch.Tensor) -> LatentPosterior:
        if not self.is_probabilistic:
            raise ConfigError(f"fusion mode '{self.mode.name_value}' has no latent posterior")
        if not torch.isfinite(intermediate).all():
            raise NonFiniteError("non-finite intermediate fusion feature")
        posterior = LatentPosterior(self.mean_head(intermediate), self.logvar_head(intermediate))
        if not (torch.isfinite(posterior.mean).all() and torch.isfinite(posterior.log_variance).all()):
            raise NonFiniteError("non-finite posterior parameters")
        return posterior

    def fusion_factor(self, z: torch.Tensor) -> torch.Tensor:
        """W = sigmoid(Conv_1(z))，形状 (B, 1, H, W)"""
        if isinstance(z, LatentSample):
            z = z.values
        if z.shape[1] != self.latent_dim:
            raise ShapeMismatchError(f"latent sample has {z.shape[1]} channels, expected {self.latent_dim}")
        return torch.sigmoid(self.factor_head(z))

    def forward(self, f_rgb: torch.Tensor, f_thermal: torch.Tensor,
                mode: SampleMode = SampleMode.POSTERIOR_MEAN,
                generator: Optional[torch.Generator] = None) -> FusionResult:
        if self.mode == FusionMode.ADDITION:
            if f_rgb.shape != f_thermal.shape:
                raise ShapeMismatchError("modality shape mismatch")
            return FusionResult(fused=f_rgb + f_thermal)

        intermediate = self.compute_intermediate(f_rgb, f_thermal)
        if self.mode == FusionMode.ATTENTION:
            factor = self.fusion_factor(self.mean_head(intermediate))
            return FusionResult(fused=fuse(f_rgb, f_thermal, factor), factor=factor)

        posterior = self.posterior_params(intermediate)
        sample = sample_latent(posterior, mode, generator=generator)
        factor = self.fusion_factor(sample)
        return FusionResult(fused=fuse(f_rgb, f_thermal, factor), posterior=posterior, factor=factor)

    def extra_repr(self) -> str:
        return (f"channels={self.channels}, s={self.kernel_size}, r={self.squeeze_ratio}, "
                f"d={self.latent_dim}, mode={self.mode.name_value}")
