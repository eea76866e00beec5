"""8 位 PNG 读写

图像在内存中为 [0,1] 浮点张量 (C, H, W)，标签为 int64 张量 (H, W)；
标签 PNG 保存为单通道灰度，像素值即类别号。
"""
from pathlib import Path
from typing import Union

import numpy as np
import torch
from PIL import Image

from common.errors import DataFileNotFoundError, DataError, OutOfRangeError
from common.log import Logger

logger = Logger().get_logger()

PathLike = Union[str, Path]


def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise DataFileNotFoundError(f"missing file: {path}", path=str(path))
    try:
        with Image.open(path) as image:
            image.load()
            return image
    except OSError as e:
        raise DataError(f"cannot decode image {path}: {e}", path=str(path)) from e


def to_unit_tensor(array: np.ndarray) -> torch.Tensor:
    """uint8 (H, W) / (H, W, C) -> float32 (C, H, W) ∈ [0,1]"""
    if array.ndim == 2:
        array = array[:, :, None]
    return torch.from_numpy(np.ascontiguousarray(array.transpose(2, 0, 1))).float() / 255.0


def to_uint8(tensor: torch.Tensor) -> np.ndarray:
    """float (C, H, W) ∈ [0,1] -> uint8 (H, W, C)，C == 1 时返回 (H, W)"""
    array = tensor.detach().cpu().double().clamp(0.0, 1.0).numpy()
    array = np.rint(array * 255.0).astype(np.uint8).transpose(1, 2, 0)
    return array[:, :, 0] if array.shape[2] == 1 else array


def read_rgb(path: PathLike) -> torch.Tensor:
    return to_unit_tensor(np.asarray(_open(path).convert("RGB")))


def read_gray(path: PathLike) -> torch.Tensor:
    return to_unit_tensor(np.asarray(_open(path).convert("L")))


def read_rgbt(path: PathLike) -> torch.Tensor:
    """4 通道 RGBT PNG（前三通道 RGB，第四通道热红外） -> (4, H, W)"""
    image = _open(path)
    if image.mode != "RGBA":
        raise DataError(f"expected a 4-channel RGBT image, got mode {image.mode}: {path}")
    return to_unit_tensor(np.asarray(image))


def read_label(path: PathLike) -> torch.Tensor:
    image = _open(path)
    # 调色板图像直接取索引值
    if image.mode not in ("L", "P", "I", "I;16"):
        image = image.convert("L")
    return torch.from_numpy(np.asarray(image).astype(np.int64))


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_rgb(path: PathLike, image: torch.Tensor):
    Image.fromarray(to_uint8(image)).save(_prepare(path))


def write_gray(path: PathLike, image: torch.Tensor):
    if image.dim() == 2:
        image = image.unsqueeze(0)
    Image.fromarray(to_uint8(image)).save(_prepare(path))


def write_label(path: PathLike, label: torch.Tensor):
    array = label.detach().cpu().numpy()
    if array.size and (array.min() < 0 or array.max() > 255):
        raise OutOfRangeError(f"label values must fit in 8 bits: {path}")
    Image.fromarray(array.astype(np.uint8)).save(_prepare(path))


def write_uint8(path: PathLike, array: np.ndarray):
    """直接写入 uint8 数组 (H, W) 或 (H, W, 3|4)"""
    Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8)).save(_prepare(path))


def normalize_map(values: torch.Tensor) -> torch.Tensor:
    """min-max 归一化到 [0,1]，常数图返回全零"""
    values = values.detach().double()
    low, high = values.min(), values.max()
    if float(high - low) <= 0:
        return torch.zeros_like(values)
    return (values - low) / (high - low)
