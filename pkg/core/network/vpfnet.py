"""VPFNet：双编码器 + 5 个 VFFM + 跳连解码器 + 多次采样平均推理"""
from dataclasses import dataclass
from typing import List, Optional

import torch
from torch import nn

from common.errors import ShapeMismatchError, OutOfRangeError, DataError
from common.log import Logger
from core.fusion.vffm import VariationalFeatureFusion
from core.network.backbone import Backbone, build_backbone
from core.network.decoder import SkipDecoder
from core.prior.gmm_prior import GaussianMixturePrior
from model.entity import NetworkOutput, SegmentationOutput
from model.enum import BackboneVariant, FusionMode, Modality, PriorCondition, SampleMode

logger = Logger().get_logger()

INPUT_MULTIPLE = 32


@dataclass
class NetworkSpec:
    """构建网络需要的结构参数"""
    num_classes: int
    backbone: BackboneVariant = BackboneVariant.TINY
    kernel_size: int = 7
    squeeze_ratio: int = 16
    latent_dim: int = 8
    num_illuminations: int = 2
    fusion_mode: FusionMode = FusionMode.PROBABILISTIC
    prior_condition: PriorCondition = PriorCondition.BOTH
    skip0_after_final_upsample: bool = False
    prior_init_std: float = 0.1

    @property
    def prior_shape(self):
        """按先验条件方式折叠类别/光照维度，返回 (C, L)；无先验时返回 None"""
        if self.fusion_mode != FusionMode.PROBABILISTIC or self.prior_condition == PriorCondition.NONE:
            return None
        classes = 1 if self.prior_condition == PriorCondition.ILLUMINATION else self.num_classes
        illuminations = 1 if self.prior_condition == PriorCondition.CATEGORY else self.num_illuminations
        return classes, illuminations


class VPFNet(nn.Module):

    def __init__(self, spec: NetworkSpec, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.spec = spec
        self.num_classes = spec.num_classes
        self.fusion_mode = FusionMode.parse(spec.fusion_mode)
        self.rgb_encoder: Backbone = build_backbone(spec.backbone)
        self.thermal_encoder: Backbone = build_backbone(spec.backbone)
        channels = self.rgb_encoder.channels
        self.fusions = nn.ModuleList([
            VariationalFeatureFusion(c, spec.kernel_size, spec.squeeze_ratio, spec.latent_dim, self.fusion_mode)
            for c in channels
        ])
        self.decoder = SkipDecoder(channels, spec.num_classes, spec.skip0_after_final_upsample)
        shape = spec.prior_shape
        self.prior: Optional[GaussianMixturePrior] = None
        if shape is not None:
            self.prior = GaussianMixturePrior(shape[0], shape[1], spec.latent_dim,
                                              init_std=spec.prior_init_std, generator=generator)

    @property
    def channels(self) -> List[int]:
        return self.rgb_encoder.channels

    @property
    def is_probabilistic(self) -> bool:
        return self.fusion_mode == FusionMode.PROBABILISTIC

    def encode(self, image: torch.Tensor, modality: Modality = Modality.RGB) -> List[torch.Tensor]:
        """(B, 3|1, H, W) -> 5 层特征；单通道输入复制为 3 通道"""
        if image.dim() != 4:
            raise ShapeMismatchError(f"expected a (B, C, H, W) image batch, got {tuple(image.shape)}")
        height, width = image.shape[-2:]
        if height % INPUT_MULTIPLE or width % INPUT_MULTIPLE:
            raise ShapeMismatchError("input must be divisible by 32", height=height, width=width)
        if image.shape[1] == 1:
            image = image.expand(-1, 3, -1, -1)
        elif image.shape[1] != 3:
            raise ShapeMismatchError(f"expected 1 or 3 input channels, got {image.shape[1]}")
        encoder = self.rgb_encoder if Modality.parse(modality) == Modality.RGB else self.thermal_encoder
        return encoder(image)

    def decode(self, pyramid: List[torch.Tensor]) -> torch.Tensor:
        return self.decoder(pyramid)

    def forward(self, rgb: torch.Tensor, thermal: torch.Tensor,
                mode: SampleMode = SampleMode.POSTERIOR_MEAN,
                generator: Optional[torch.Generator] = None) -> NetworkOutput:
        if rgb.shape[0] != thermal.shape[0] or rgb.shape[-2:] != thermal.shape[-2:]:
            raise ShapeMismatchError("modality shape mismatch",
                                     rgb=tuple(rgb.shape), thermal=tuple(thermal.shape))
        rgb_features = self.encode(rgb, Modality.RGB)
        thermal_features = self.encode(thermal, Modality.THERMAL)
        fused, posteriors, factors = [], [], []
        # 每层各取一次潜变量，按层序从同一个 generator 取随机数
        for fusion, f_rgb, f_thermal in zip(self.fusions, rgb_features, thermal_features):
            result = fusion(f_rgb, f_thermal, mode=mode, generator=generator)
            fused.append(result.fused)
            posteriors.append(result.posterior)
            factors.append(result.factor)
        return NetworkOutput(logits=self.decode(fused), posteriors=posteriors, factors=factors)

    def forward_stochastic(self, rgb: torch.Tensor, thermal: torch.Tensor, seed: int) -> NetworkOutput:
        generator = torch.Generator().manual_seed(int(seed))
        return self.forward(rgb, thermal, mode=SampleMode.RANDOM, generator=generator)

    @torch.no_grad()
    def infer_averaged(self, rgb: torch.Tensor, thermal: torch.Tensor,
                       num_samples: int = 1, seed: int = 0) -> SegmentationOutput:
        """N_s = 1 用后验均值单次前向；N_s > 1 对 N_s 次随机前向的 softmax 求平均"""
        if num_samples < 1:
            raise OutOfRangeError(f"num_samples must be >= 1, got {num_samples}")
        if num_samples == 1 or not self.is_probabilistic:
            return self.forward(rgb, thermal, mode=SampleMode.POSTERIOR_MEAN).segmentation()

        generator = torch.Generator().manual_seed(int(seed))
        confidence = None
        for _ in range(num_samples):
            logits = self.forward(rgb, thermal, mode=SampleMode.RANDOM, generator=generator).logits
            probabilities = torch.softmax(logits, dim=1)
            confidence = probabilities if confidence is None else confidence + probabilities
        return SegmentationOutput.from_confidence(confidence / num_samples)

    @torch.no_grad()
    def infer_missing_modality(self, rgb: Optional[torch.Tensor] = None, thermal: Optional[torch.Tensor] = None,
                               num_samples: int = 1, seed: int = 0) -> SegmentationOutput:
        """缺失的模态以全零图像代替，其余与 infer_averaged 相同"""
        if rgb is None and thermal is None:
            raise DataError("both modalities missing")
        if rgb is None:
            batch, _, height, width = thermal.shape
            rgb = thermal.new_zeros((batch, 3, height, width))
        if thermal is None:
            batch, _, height, width = rgb.shape
            thermal = rgb.new_zeros((batch, 1, height, width))
        return self.infer_averaged(rgb, thermal, num_samples=num_samples, seed=seed)

    def parameter_groups(self):
        """按模块分组的可训练参数，用于梯度可达性检查与日志"""
        groups = {
            "rgb_encoder": self.rgb_encoder,
            "thermal_encoder": self.thermal_encoder,
            "decoder": self.decoder,
        }
        for level, fusion in enumerate(self.fusions):
            groups[f"fusion{level}"] = fusion
        if self.prior is not None:
            groups["prior"] = self.prior
        return {name: [p for p in module.parameters() if p.requires_grad] for name, module in groups.items()}


def build_network(spec: NetworkSpec, seed: int = 0, dtype: torch.dtype = torch.float32) -> VPFNet:
    """按 seed 初始化网络参数；先验均值使用独立的 generator，不改变全局随机状态"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        model = VPFNet(spec, generator=torch.Generator().manual_seed(int(seed) + 1))
    total = sum(p.numel() for p in model.parameters())
    logger.debug(f"built VPFNet backbone={BackboneVariant.parse(spec.backbone).name_value} "
                 f"fusion={model.fusion_mode.name_value} params={total}")
    return model.to(dtype)
