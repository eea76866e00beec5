"""独立校验工具（测试使用）

这里的实现刻意朴素，不复用被校验模块的代码路径：
- mc_kl: 重参数化采样的蒙特卡洛 KL 估计（numpy, float64）
- finite_diff_grad: 中心差分数值梯度
- dense_conv_reference: 逐元素循环的二维卷积
- brute_force_metrics: 逐像素计数的 mAcc / mIoU
- naive_mixture_log_likelihood: 不做 log-sum-exp 的直接求和
"""
import math
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import torch

from common.log import Logger
from model.entity import (LatentPosterior, MetricsSummary, MonteCarloEstimate, OracleReport,
                          PixelConditionMap, LOG_VARIANCE_CLAMP)

logger = Logger().get_logger()


def _numpy64(tensor) -> np.ndarray:
    if torch.is_tensor(tensor):
        return tensor.detach().cpu().double().numpy()
    return np.asarray(tensor, dtype=np.float64)


def _gaussian_log_density(x: np.ndarray, mean: np.ndarray, log_var: np.ndarray) -> np.ndarray:
    return -0.5 * (np.log(2.0 * np.pi) + log_var + (x - mean) ** 2 / np.exp(log_var))


def mc_kl(posterior: LatentPosterior, condition: PixelConditionMap, prior, n_samples: int = 1_000_000,
          seed: int = 0, chunk_size: int = 100_000) -> MonteCarloEstimate:
    """E_q[log q(z) − log p(z | c, l)]，对 d·H·W 求平均、再对 batch 求平均"""
    mean = _numpy64(posterior.mean)
    log_var = np.clip(_numpy64(posterior.log_variance), -LOG_VARIANCE_CLAMP, LOG_VARIANCE_CLAMP)
    category = np.asarray(condition.category.detach().cpu().numpy(), dtype=np.int64)
    illumination = np.asarray(torch.as_tensor(condition.illumination).reshape(-1).cpu().numpy(), dtype=np.int64)
    mu_tilde = _numpy64(prior.mu_tilde)
    log_sigma_tilde = _numpy64(prior.log_sigma_tilde)
    num_classes, num_illuminations = mu_tilde.shape[:2]

    batch, depth, height, width = mean.shape
    if category.ndim == 2:
        category = category[None]
    if illumination.size == 1:
        illumination = np.repeat(illumination, batch)
    prior_mean = np.empty_like(mean)
    prior_log_var = np.empty_like(mean)
    for b in range(batch):
        l = 0 if num_illuminations == 1 else int(illumination[b])
        for i in range(height):
            for j in range(width):
                c = 0 if num_classes == 1 else int(category[b, i, j])
                for k in range(depth):
                    prior_mean[b, k, i, j] = mu_tilde[c, l, k]
                    prior_log_var[b, k, i, j] = log_sigma_tilde[c, l, k]

    rng = np.random.default_rng(seed)
    std = np.exp(0.5 * log_var)
    total, total_sq, drawn = 0.0, 0.0, 0
    while drawn < n_samples:
        n = min(chunk_size, n_samples - drawn)
        z = mean[None] + std[None] * rng.standard_normal((n,) + mean.shape)
        log_ratio = (_gaussian_log_density(z, mean[None], log_var[None])
                     - _gaussian_log_density(z, prior_mean[None], prior_log_var[None]))
        values = log_ratio.reshape(n, -1).mean(axis=1)
        total += values.sum()
        total_sq += (values ** 2).sum()
        drawn += n
    estimate = total / n_samples
    variance = max(total_sq / n_samples - estimate ** 2, 0.0)
    return MonteCarloEstimate(value=float(estimate), stderr=math.sqrt(variance / n_samples), n_samples=n_samples)


def finite_diff_grad(loss_fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], step: float = 1e-3,
                     max_entries: Optional[int] = None, seed: int = 0) -> List[torch.Tensor]:
    """中心差分 (f(x+h) − f(x−h)) / 2h

    max_entries 给定时每个张量随机抽取该数量的元素，未抽到的位置填 NaN
    """
    rng = np.random.default_rng(seed)
    gradients = []
    with torch.no_grad():
        for param in params:
            flat = param.view(-1)
            numeric = torch.full_like(flat, float("nan"))
            indices = np.arange(flat.numel())
            if max_entries is not None and flat.numel() > max_entries:
                indices = np.sort(rng.choice(flat.numel(), size=max_entries, replace=False))
            for index in indices:
                original = flat[index].item()
                flat[index] = original + step
                plus = float(loss_fn())
                flat[index] = original - step
                minus = float(loss_fn())
                flat[index] = original
                numeric[index] = (plus - minus) / (2.0 * step)
            gradients.append(numeric.view_as(param))
    return gradients


def max_relative_error(analytic: Sequence[torch.Tensor], numeric: Sequence[torch.Tensor],
                       floor: float = 1e-6) -> float:
    """逐张量 ‖a − n‖ / max(‖a‖, ‖n‖)，跳过幅值不超过 floor 的张量，返回最大值"""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = _numpy64(a).ravel()
        n = _numpy64(n).ravel()
        mask = ~np.isnan(n)
        a, n = a[mask], n[mask]
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        if scale <= floor:
            continue
        worst = max(worst, float(np.linalg.norm(a - n) / scale))
    return worst


def gradient_check(name: str, loss_fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor],
                   step: float = 1e-3, tolerance: float = 1e-4, max_entries: Optional[int] = None,
                   seed: int = 0) -> OracleReport:
    """自动微分梯度与中心差分的比较报告"""
    params = list(params)
    analytic = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    analytic = [torch.zeros_like(p) if g is None else g for p, g in zip(params, analytic)]
    numeric = finite_diff_grad(loss_fn, params, step=step, max_entries=max_entries, seed=seed)
    error = max_relative_error(analytic, numeric)
    report = OracleReport.compare(name, 0.0, error, tolerance, step=step,
                                  samples=sum(int((~torch.isnan(n)).sum()) for n in numeric))
    logger.debug(report.message)
    return report


def dense_conv_reference(inputs, weight, bias=None, stride: int = 1, padding: int = 0) -> torch.Tensor:
    """二维互相关的逐元素循环实现，inputs (B, C_in, H, W) 或 (C_in, H, W)"""
    x = _numpy64(inputs)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    w = _numpy64(weight)
    b = np.zeros(w.shape[0]) if bias is None else _numpy64(bias)
    batch, in_channels, height, width = x.shape
    out_channels, _, kh, kw = w.shape
    padded = np.zeros((batch, in_channels, height + 2 * padding, width + 2 * padding))
    padded[:, :, padding:padding + height, padding:padding + width] = x
    out_h = (height + 2 * padding - kh) // stride + 1
    out_w = (width + 2 * padding - kw) // stride + 1
    out = np.zeros((batch, out_channels, out_h, out_w))
    for n in range(batch):
        for o in range(out_channels):
            for i in range(out_h):
                for j in range(out_w):
                    acc = b[o]
                    for c in range(in_channels):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[o, c, u, v] * padded[n, c, i * stride + u, j * stride + v]
                    out[n, o, i, j] = acc
    result = torch.from_numpy(out)
    return result[0] if squeeze else result


def brute_force_metrics(preds: Union[Sequence, np.ndarray, torch.Tensor],
                        gts: Union[Sequence, np.ndarray, torch.Tensor],
                        num_classes: int, exclude_background: bool = False) -> MetricsSummary:
    """逐像素计数真阳性 / 真值数 / 预测数，再用有理数求 Acc 与 IoU"""
    if not isinstance(preds, (list, tuple)):
        preds, gts = [preds], [gts]
    true_positive = [0] * num_classes
    gt_count = [0] * num_classes
    pred_count = [0] * num_classes
    pixels = 0
    for pred, gt in zip(preds, gts):
        for p, g in zip(np.asarray(pred).ravel().tolist(), np.asarray(gt).ravel().tolist()):
            pixels += 1
            gt_count[g] += 1
            pred_count[p] += 1
            if p == g:
                true_positive[g] += 1

    accs, ious = [], []
    for c in range(num_classes):
        accs.append(Fraction(true_positive[c], gt_count[c]) if gt_count[c] else None)
        union = gt_count[c] + pred_count[c] - true_positive[c]
        ious.append(Fraction(true_positive[c], union) if union else None)

    def mean(values):
        kept = [v for c, v in enumerate(values) if v is not None and not (exclude_background and c == 0)]
        return float(sum(kept, Fraction(0)) / len(kept)) if kept else None

    return MetricsSummary(
        class_names=[f"class{c}" for c in range(num_classes)],
        per_class_acc=[None if a is None else float(a) for a in accs],
        per_class_iou=[None if i is None else float(i) for i in ious],
        mean_acc=mean(accs),
        mean_iou=mean(ious),
        pixel_count=pixels,
        excluded=[0] if exclude_background else [],
    )


def naive_mixture_log_likelihood(z, prior) -> float:
    """log Σ_{c,l} γ N(z; μ̃, Σ̃) 逐元素直接求和后取平均"""
    values = _numpy64(z)
    mu = _numpy64(prior.mu_tilde)
    log_var = _numpy64(prior.log_sigma_tilde)
    gamma = _numpy64(prior.gamma)
    num_classes, num_illuminations, _ = mu.shape
    batch, depth, height, width = values.shape
    total = 0.0
    for b in range(batch):
        for k in range(depth):
            for i in range(height):
                for j in range(width):
                    density = 0.0
                    for c in range(num_classes):
                        for l in range(num_illuminations):
                            variance = math.exp(log_var[c, l, k])
                            density += gamma[c, l] * math.exp(
                                -(values[b, k, i, j] - mu[c, l, k]) ** 2 / (2 * variance)
                            ) / math.sqrt(2 * math.pi * variance)
                    total += math.log(density)
    return total / values.size
