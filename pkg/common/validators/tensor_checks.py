"""张量检查"""
import torch

from common.errors import NonFiniteError, OutOfRangeError, ShapeMismatchError


def check_finite(tensor: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(tensor).all():
        raise NonFiniteError(f"non-finite {what}")
    return tensor


def check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: {tuple(a.shape)} vs {tuple(b.shape)}")


def check_labels(labels: torch.Tensor, num_classes: int) -> torch.Tensor:
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise OutOfRangeError("label out of range", num_classes=num_classes)
    return labels
