import allure
import pytest
import torch
import torch.nn.functional as F

from common.errors import ConfigError, OutOfRangeError, ShapeMismatchError, NonFiniteError
from common.validators.oracles import dense_conv_reference, gradient_check
from core.fusion.vffm import VariationalFeatureFusion, fuse, sample_latent
from model.entity import LatentPosterior
from model.enum import FusionMode, SampleMode


def _features(generator, shape=(2, 4, 6, 6)):
    return (torch.randn(shape, generator=generator, dtype=torch.float64),
            torch.randn(shape, generator=generator, dtype=torch.float64))


def _module(channels=4, kernel_size=3, squeeze_ratio=2, latent_dim=3, mode=FusionMode.PROBABILISTIC, seed=0):
    torch.manual_seed(seed)
    return VariationalFeatureFusion(channels, kernel_size, squeeze_ratio, latent_dim, mode).double()


@allure.epic("VPFNet")
@allure.feature("变分特征融合")
@allure.story("凸组合")
@pytest.mark.unit
class TestFuseCase:

    def test_boundary_identities(self):
        generator = torch.Generator().manual_seed(1)
        f_rgb, f_thermal = _features(generator)
        zeros = torch.zeros(2, 1, 6, 6, dtype=torch.float64)
        assert torch.equal(fuse(f_rgb, f_thermal, zeros), f_thermal)
        assert torch.equal(fuse(f_rgb, f_thermal, torch.ones_like(zeros)), f_rgb)

    def test_boundary_identities_keep_signed_zero(self):
        f_rgb = torch.tensor([[[[-0.0, 1.0]]]], dtype=torch.float64)
        f_thermal = torch.tensor([[[[2.0, -0.0]]]], dtype=torch.float64)
        ones = torch.ones(1, 1, 1, 2, dtype=torch.float64)
        rgb_side = fuse(f_rgb, f_thermal, ones)
        thermal_side = fuse(f_rgb, f_thermal, torch.zeros_like(ones))
        assert torch.equal(rgb_side.view(torch.int64), f_rgb.view(torch.int64))
        assert torch.equal(thermal_side.view(torch.int64), f_thermal.view(torch.int64))

        mixed = fuse(f_rgb, f_thermal, torch.tensor([[[[1.0, 0.0]]]], dtype=torch.float64))
        assert torch.signbit(mixed[0, 0, 0, 0]) and torch.signbit(mixed[0, 0, 0, 1])

    def test_hand_evaluated_constant_case(self):
        f_rgb = torch.full((1, 3, 2, 2), 2.0, dtype=torch.float64)
        f_thermal = torch.full((1, 3, 2, 2), 4.0, dtype=torch.float64)
        factor = torch.full((1, 1, 2, 2), 0.25, dtype=torch.float64)
        assert torch.equal(fuse(f_rgb, f_thermal, factor), torch.full((1, 3, 2, 2), 3.5, dtype=torch.float64))

    def test_convex_envelope_on_random_instances(self):
        generator = torch.Generator().manual_seed(2)
        for _ in range(1000):
            f_rgb = torch.randn(1, 3, 4, 4, generator=generator) * 10
            f_thermal = torch.randn(1, 3, 4, 4, generator=generator) * 10
            factor = torch.rand(1, 1, 4, 4, generator=generator)
            fused = fuse(f_rgb, f_thermal, factor)
            assert (fused >= torch.minimum(f_rgb, f_thermal)).all()
            assert (fused <= torch.maximum(f_rgb, f_thermal)).all()

    @pytest.mark.parametrize("value", [-0.1, 1.5, float("nan")])
    def test_invalid_fusion_factor(self, value):
        f_rgb = torch.zeros(1, 2, 3, 3)
        with pytest.raises(OutOfRangeError, match="invalid fusion factor"):
            fuse(f_rgb, f_rgb, torch.full((1, 1, 3, 3), value))

    def test_modality_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError, match="modality shape mismatch"):
            fuse(torch.zeros(1, 2, 3, 3), torch.zeros(1, 2, 4, 4), torch.zeros(1, 1, 3, 3))


@allure.epic("VPFNet")
@allure.feature("变分特征融合")
@allure.story("重参数化采样")
@pytest.mark.unit
class TestSampleLatentCase:

    def test_posterior_mean_mode_returns_mean(self):
        mean = torch.randn(1, 2, 3, 3)
        sample = sample_latent(LatentPosterior(mean, torch.zeros_like(mean)), SampleMode.POSTERIOR_MEAN)
        assert sample.values is mean
        assert sample.provenance == SampleMode.POSTERIOR_MEAN

    def test_zero_variance_limit(self):
        mean = torch.randn(1, 2, 5, 5, dtype=torch.float64)
        posterior = LatentPosterior(mean, torch.full_like(mean, -40.0))
        sample = sample_latent(posterior, SampleMode.RANDOM, seed=3)
        assert torch.allclose(sample.values, mean, rtol=0, atol=1e-7)

    def test_random_mode_requires_seed_or_generator(self):
        mean = torch.zeros(1, 1, 2, 2)
        with pytest.raises(ConfigError):
            sample_latent(LatentPosterior(mean, mean), SampleMode.RANDOM)

    def test_seeded_reproducibility(self):
        mean = torch.zeros(1, 2, 4, 4)
        posterior = LatentPosterior(mean, torch.zeros_like(mean))
        first = sample_latent(posterior, SampleMode.RANDOM, seed=7).values
        second = sample_latent(posterior, SampleMode.RANDOM, seed=7).values
        other = sample_latent(posterior, SampleMode.RANDOM, seed=8).values
        assert torch.equal(first, second)
        assert not torch.equal(first, other)

    def test_standard_normal_statistics(self):
        mean = torch.zeros(1, 1, 1000, 1000, dtype=torch.float64)
        posterior = LatentPosterior(mean, torch.zeros_like(mean))
        values = sample_latent(posterior, SampleMode.RANDOM, seed=0).values
        assert abs(float(values.mean())) < 4e-3
        assert abs(float(values.var()) - 1.0) < 0.01

    def test_shifted_statistics(self):
        mean = torch.full((1, 1, 1000, 1000), 2.0, dtype=torch.float64)
        log_variance = torch.full_like(mean, 0.5)
        values = sample_latent(LatentPosterior(mean, log_variance), SampleMode.RANDOM, seed=1).values
        variance = float(torch.exp(torch.tensor(0.5)))
        assert abs(float(values.mean()) - 2.0) < 5 * (variance ** 0.5) / 1000
        assert abs(float(values.var()) / variance - 1.0) < 0.01

    def test_gradient_flows_through_sample(self):
        mean = torch.zeros(1, 2, 3, 3, dtype=torch.float64, requires_grad=True)
        log_variance = torch.zeros(1, 2, 3, 3, dtype=torch.float64, requires_grad=True)
        sample = sample_latent(LatentPosterior(mean, log_variance), SampleMode.RANDOM, seed=0)
        (sample.values ** 2).sum().backward()
        assert mean.grad is not None and log_variance.grad is not None
        assert float(log_variance.grad.abs().sum()) > 0


@allure.epic("VPFNet")
@allure.feature("变分特征融合")
@allure.story("VFFM 模块")
@pytest.mark.unit
class TestVariationalFeatureFusionCase:

    def test_zero_input_gives_zero_intermediate(self):
        module = _module().eval()
        zeros = torch.zeros(1, 4, 5, 5, dtype=torch.float64)
        expected = torch.zeros(1, module.hidden_channels, 5, 5, dtype=torch.float64)
        assert torch.equal(module.compute_intermediate(zeros, zeros), expected)

    def test_leaky_slope(self):
        module = _module().eval()
        generator = torch.Generator().manual_seed(0)
        f_rgb, f_thermal = _features(generator, (1, 4, 5, 5))
        pre = module.norm(module.squeeze_conv(torch.cat([f_rgb, f_thermal], dim=1)))
        expected = torch.where(pre < 0, 0.2 * pre, pre)
        assert torch.allclose(module.compute_intermediate(f_rgb, f_thermal), expected, atol=1e-12)
        assert (pre < 0).any()

    @pytest.mark.parametrize("kernel_size", [1, 3, 5])
    def test_squeeze_conv_matches_dense_reference(self, kernel_size):
        module = _module(channels=1, kernel_size=kernel_size, squeeze_ratio=1)
        generator = torch.Generator().manual_seed(kernel_size)
        stacked = torch.randn(1, 2, 4, 4, generator=generator, dtype=torch.float64)
        padding = (kernel_size - 1) // 2
        reference = dense_conv_reference(stacked, module.squeeze_conv.weight, None, padding=padding)
        assert torch.allclose(module.squeeze_conv(stacked), reference, atol=1e-10)
        assert module.squeeze_conv(stacked).shape[-2:] == stacked.shape[-2:]

    def test_posterior_heads_are_independent(self):
        module = _module()
        assert module.mean_head.weight is not module.logvar_head.weight
        with torch.no_grad():
            for head, bias in ((module.mean_head, 0.3), (module.logvar_head, -1.2)):
                head.weight.zero_()
                head.bias.fill_(bias)
        posterior = module.posterior_params(torch.zeros(1, module.hidden_channels, 3, 3, dtype=torch.float64))
        assert torch.equal(posterior.mean, torch.full((1, 3, 3, 3), 0.3, dtype=torch.float64))
        assert torch.equal(posterior.log_variance, torch.full((1, 3, 3, 3), -1.2, dtype=torch.float64))

    def test_mean_head_matches_per_pixel_matmul(self):
        module = _module()
        intermediate = torch.randn(2, module.hidden_channels, 3, 3, dtype=torch.float64)
        weight = module.mean_head.weight[:, :, 0, 0]
        expected = torch.einsum("oc,bchw->bohw", weight, intermediate) + module.mean_head.bias.view(1, -1, 1, 1)
        assert torch.allclose(module.posterior_params(intermediate).mean, expected, atol=1e-12)

    def test_non_finite_posterior_is_reported(self):
        module = _module()
        with pytest.raises(NonFiniteError):
            module.posterior_params(torch.full((1, module.hidden_channels, 3, 3), float("inf"), dtype=torch.float64))

    def test_fusion_factor_center_and_saturation(self):
        module = _module()
        with torch.no_grad():
            module.factor_head.weight.zero_()
            module.factor_head.bias.zero_()
        z = torch.zeros(1, 3, 4, 4, dtype=torch.float64)
        assert torch.equal(module.fusion_factor(z), torch.full((1, 1, 4, 4), 0.5, dtype=torch.float64))

        with torch.no_grad():
            module.factor_head.bias.fill_(40.0)
        factor = module.fusion_factor(z)
        f_rgb, f_thermal = _features(torch.Generator().manual_seed(5), (1, 4, 4, 4))
        assert torch.allclose(fuse(f_rgb, f_thermal, factor), f_rgb, atol=1e-12)

    def test_fusion_factor_matches_per_pixel_sigmoid(self):
        module = _module()
        z = torch.randn(1, 3, 4, 4, dtype=torch.float64)
        weight = module.factor_head.weight[0, :, 0, 0]
        expected = torch.sigmoid(torch.einsum("c,bchw->bhw", weight, z) + module.factor_head.bias).unsqueeze(1)
        factor = module.fusion_factor(z)
        assert torch.allclose(factor, expected, atol=1e-12)
        assert ((factor > 0) & (factor < 1)).all()

    def test_posterior_mean_mode_is_deterministic(self):
        module = _module().eval()
        f_rgb, f_thermal = _features(torch.Generator().manual_seed(0))
        first = module(f_rgb, f_thermal, mode=SampleMode.POSTERIOR_MEAN)
        second = module(f_rgb, f_thermal, mode=SampleMode.POSTERIOR_MEAN)
        assert torch.equal(first.fused, second.fused)

    def test_random_mode_seeds(self):
        module = _module().eval()
        f_rgb, f_thermal = _features(torch.Generator().manual_seed(0))

        def run(seed):
            return module(f_rgb, f_thermal, mode=SampleMode.RANDOM,
                          generator=torch.Generator().manual_seed(seed)).fused

        first, again, other = run(11), run(11), run(12)
        assert torch.equal(first, again)
        assert not torch.equal(first, other)
        lower, upper = torch.minimum(f_rgb, f_thermal), torch.maximum(f_rgb, f_thermal)
        for fused in (first, other):
            assert ((fused >= lower) & (fused <= upper)).all()

    def test_zero_variance_collapse(self):
        module = _module().eval()
        with torch.no_grad():
            module.logvar_head.weight.zero_()
            module.logvar_head.bias.fill_(-40.0)
        f_rgb, f_thermal = _features(torch.Generator().manual_seed(0))
        random = module(f_rgb, f_thermal, mode=SampleMode.RANDOM, generator=torch.Generator().manual_seed(0))
        mean = module(f_rgb, f_thermal, mode=SampleMode.POSTERIOR_MEAN)
        assert torch.allclose(random.fused, mean.fused, rtol=0, atol=1e-6)

    def test_forward_returns_posterior_and_factor(self):
        module = _module()
        f_rgb, f_thermal = _features(torch.Generator().manual_seed(0))
        result = module(f_rgb, f_thermal)
        assert result.fused.shape == f_rgb.shape
        assert result.posterior.mean.shape == (2, 3, 6, 6)
        assert result.factor.shape == (2, 1, 6, 6)

    def test_modality_shape_mismatch(self):
        module = _module()
        with pytest.raises(ShapeMismatchError, match="modality shape mismatch"):
            module(torch.zeros(1, 4, 4, 4, dtype=torch.float64), torch.zeros(1, 4, 5, 5, dtype=torch.float64))

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            VariationalFeatureFusion(4, kernel_size=4)

    def test_attention_mode_has_no_posterior(self):
        module = _module(mode=FusionMode.ATTENTION)
        assert not hasattr(module, "logvar_head")
        f_rgb, f_thermal = _features(torch.Generator().manual_seed(0))
        result = module(f_rgb, f_thermal, mode=SampleMode.RANDOM)
        assert result.posterior is None
        assert ((result.factor > 0) & (result.factor < 1)).all()

    def test_addition_mode_sums_features(self):
        module = _module(mode=FusionMode.ADDITION)
        assert len(list(module.parameters())) == 0
        f_rgb, f_thermal = _features(torch.Generator().manual_seed(0))
        result = module(f_rgb, f_thermal)
        assert torch.equal(result.fused, f_rgb + f_thermal)
        assert result.factor is None and result.posterior is None


@allure.epic("VPFNet")
@allure.feature("变分特征融合")
@allure.story("梯度校验")
@pytest.mark.unit
class TestFusionGradientCase:

    def test_gradient_wrt_posterior_and_factor_head(self, float64):
        module = _module(channels=2, latent_dim=2)
        generator = torch.Generator().manual_seed(4)
        f_rgb, f_thermal = _features(generator, (1, 2, 5, 5))
        mean = torch.randn(1, 2, 5, 5, generator=generator, dtype=torch.float64, requires_grad=True)
        log_variance = (0.3 * torch.randn(1, 2, 5, 5, generator=generator, dtype=torch.float64)).requires_grad_()

        def loss_fn():
            sample = sample_latent(LatentPosterior(mean, log_variance), SampleMode.RANDOM, seed=0)
            return (fuse(f_rgb, f_thermal, module.fusion_factor(sample)) ** 2).sum()

        params = [mean, log_variance, module.factor_head.weight, module.factor_head.bias]
        with allure.step("中心差分 step=1e-3"):
            report = gradient_check("fusion posterior", loss_fn, params, step=1e-3, tolerance=1e-4)
        assert report.passed, report.message

    def test_gradient_wrt_all_module_parameters(self, float64):
        module = _module(channels=2, kernel_size=3, squeeze_ratio=1, latent_dim=2)
        f_rgb, f_thermal = _features(torch.Generator().manual_seed(6), (2, 2, 5, 5))

        def loss_fn():
            result = module(f_rgb, f_thermal, mode=SampleMode.RANDOM, generator=torch.Generator().manual_seed(0))
            return (result.fused ** 2).sum()

        # LeakyReLU 在 0 处不可导，用更小的步长避免跨越拐点
        report = gradient_check("fusion module", loss_fn, list(module.parameters()), step=1e-6, tolerance=1e-4)
        assert report.passed, report.message

    def test_conv_gradient_matches_functional(self, float64):
        module = _module(channels=1, kernel_size=3, squeeze_ratio=1)
        stacked = torch.randn(1, 2, 4, 4, dtype=torch.float64)
        loss_fn = lambda: F.conv2d(stacked, module.squeeze_conv.weight, padding=1).pow(2).sum()
        report = gradient_check("squeeze conv", loss_fn, [module.squeeze_conv.weight])
        assert report.passed, report.message
