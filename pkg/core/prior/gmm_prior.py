"""条件高斯混合先验

每个 (类别 c, 光照 l, 通道 k) 有一个可学习的均值 μ̃ 与对数方差 logΣ̃，
混合权重 γ 固定为 1/(C·L)。KL 项按像素所属类别与图像光照选择分量，
逐元素取闭式 KL 并在 d·H·W 上求平均。
"""
import math
from typing import Optional, Tuple, Union

import torch
from torch import nn

from common.errors import ShapeMismatchError, OutOfRangeError, ConfigError
from model.entity import LatentPosterior, LatentSample, PixelConditionMap

LOG_2PI = math.log(2.0 * math.pi)


def _source_indices(src: int, dst: int, device=None) -> torch.Tensor:
    # 取包含目标像素中心的源像素，中心恰在边界上时取较小下标：ceil((i + 0.5)·src/dst) − 1
    dst_index = torch.arange(dst, device=device)
    return ((2 * dst_index + 1) * src + 2 * dst - 1) // (2 * dst) - 1


def downsample_labels(labels: torch.Tensor, target_shape: Tuple[int, int]) -> torch.Tensor:
    """最近邻下采样标签图，(..., H, W) -> (..., h, w)，不做插值"""
    target_h, target_w = int(target_shape[0]), int(target_shape[1])
    src_h, src_w = labels.shape[-2:]
    if target_h > src_h or target_w > src_w:
        raise ShapeMismatchError(
            f"target shape {(target_h, target_w)} larger than label shape {(src_h, src_w)}"
        )
    if (target_h, target_w) == (src_h, src_w):
        return labels
    rows = _source_indices(src_h, target_h, labels.device)
    cols = _source_indices(src_w, target_w, labels.device)
    return labels[..., rows, :][..., cols]


class GaussianMixturePrior(nn.Module):
    """潜变量的 GMM 先验，参数形状 (C, L, d)

    C == 1 时忽略类别（仅光照条件），L == 1 时忽略光照（仅类别条件）
    """

    def __init__(self, num_classes: int, num_illuminations: int = 2, latent_dim: int = 8,
                 init_std: float = 0.1, generator: Optional[torch.Generator] = None):
        super().__init__()
        if num_classes < 1 or num_illuminations < 1 or latent_dim < 1:
            raise ConfigError(
                f"invalid prior shape C={num_classes}, L={num_illuminations}, d={latent_dim}"
            )
        self.num_classes = num_classes
        self.num_illuminations = num_illuminations
        self.latent_dim = latent_dim
        shape = (num_classes, num_illuminations, latent_dim)
        self.mu_tilde = nn.Parameter(torch.randn(shape, generator=generator) * init_std)
        self.log_sigma_tilde = nn.Parameter(torch.zeros(shape))
        self.register_buffer("gamma", torch.full((num_classes, num_illuminations),
                                                 1.0 / (num_classes * num_illuminations)))

    @property
    def num_components(self) -> int:
        return self.num_classes * self.num_illuminations

    def component_indices(self, category: torch.Tensor,
                          illumination: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """检查条件取值范围，返回 (类别下标, 光照下标)，形状可广播"""
        category = category.long()
        illumination = torch.as_tensor(illumination, device=category.device).long()
        if category.numel() and category.min() < 0:
            raise OutOfRangeError("label out of range")
        if self.num_classes > 1 and category.numel() and category.max() >= self.num_classes:
            raise OutOfRangeError("label out of range",
                                  max_label=int(category.max()), num_classes=self.num_classes)
        if illumination.numel() and illumination.min() < 0:
            raise OutOfRangeError("illumination out of range")
        if self.num_illuminations > 1 and illumination.numel() and illumination.max() >= self.num_illuminations:
            raise OutOfRangeError("illumination out of range")
        if self.num_classes == 1:
            category = torch.zeros_like(category)
        if self.num_illuminations == 1:
            illumination = torch.zeros_like(illumination)
        return category, illumination

    def select(self, condition: PixelConditionMap) -> Tuple[torch.Tensor, torch.Tensor]:
        """按条件选出每个像素的分量参数，返回 (μ̃, logΣ̃)，形状 (B, d, H, W)"""
        category, illumination = self.component_indices(condition.category, condition.illumination)
        if category.dim() == 2:
            category = category.unsqueeze(0)
        illumination = illumination.reshape(-1, 1, 1).expand_as(category)
        mu = self.mu_tilde[category, illumination].permute(0, 3, 1, 2)
        log_sigma = self.log_sigma_tilde[category, illumination].permute(0, 3, 1, 2)
        return mu, log_sigma

    def extra_repr(self) -> str:
        return f"C={self.num_classes}, L={self.num_illuminations}, d={self.latent_dim}"


def conditional_kl(posterior: LatentPosterior, condition: PixelConditionMap,
                   prior: GaussianMixturePrior) -> torch.Tensor:
    """逐像素选分量的闭式 KL(q‖p)，对 d·H·W 求平均，返回形状 (B,)

    每个元素：½[logΣ̃ − logV + V/Σ̃ − 1 + (μ̃ − M)²/Σ̃]
    """
    if condition.spatial_shape != posterior.spatial_shape:
        raise ShapeMismatchError(
            f"condition map {condition.spatial_shape} not aligned with latent grid {posterior.spatial_shape}"
        )
    if posterior.latent_dim != prior.latent_dim:
        raise ShapeMismatchError(f"posterior has d={posterior.latent_dim}, prior has d={prior.latent_dim}")
    prior_mean, prior_log_var = prior.select(condition)
    post_log_var = posterior.clamped_log_variance
    mean = posterior.mean
    prior_mean = prior_mean.to(mean.dtype)
    prior_log_var = prior_log_var.to(mean.dtype)
    kl = 0.5 * (prior_log_var - post_log_var
                + torch.exp(post_log_var - prior_log_var)
                - 1.0
                + (prior_mean - mean) ** 2 * torch.exp(-prior_log_var))
    return kl.flatten(1).mean(dim=1)


def prior_log_likelihood(z: Union[LatentSample, torch.Tensor], prior: GaussianMixturePrior) -> torch.Tensor:
    """边缘混合密度的平均对数似然（监控用），log-sum-exp 稳定"""
    values = z.values if isinstance(z, LatentSample) else z
    if values.shape[1] != prior.latent_dim:
        raise ShapeMismatchError(f"sample has d={values.shape[1]}, prior has d={prior.latent_dim}")
    # (K, d)
    mu = prior.mu_tilde.reshape(-1, prior.latent_dim).to(values.dtype)
    log_var = prior.log_sigma_tilde.reshape(-1, prior.latent_dim).to(values.dtype)
    log_gamma = torch.log(prior.gamma.reshape(-1).to(values.dtype))

    # values (B, d, H, W) -> (B, H, W, d, 1)
    x = values.movedim(1, -1).unsqueeze(-1)
    mu, log_var = mu.t(), log_var.t()
    log_normal = -0.5 * (LOG_2PI + log_var + (x - mu) ** 2 * torch.exp(-log_var))
    return torch.logsumexp(log_normal + log_gamma, dim=-1).mean()
