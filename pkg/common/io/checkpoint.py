"""检查点存档

单个 .npz 文件（不使用 pickle），按名称保存：

    param/<state_dict key>        模型参数与缓冲区（含 BN 统计量）
    optim/<index>/<key>           优化器逐参数状态
    meta/optim_groups             优化器参数组（JSON）
    meta/config                   配置回显（INI 文本）
    meta/format_version, meta/step, meta/epoch, meta/best_miou, meta/version
"""
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Iterable, Union

import numpy as np
import torch
from torch import nn

from common.errors import CheckpointError, DataFileNotFoundError
from common.log import Logger

logger = Logger().get_logger()

FORMAT_VERSION = 1
PARAM_PREFIX = "param/"
OPTIM_PREFIX = "optim/"
META_PREFIX = "meta/"
ENCODER_PREFIXES = ("rgb_encoder.", "thermal_encoder.")


@dataclass
class Checkpoint:
    params: Dict[str, np.ndarray]
    config_text: str = ""
    step: int = 0
    epoch: int = 0
    best_miou: Optional[float] = None
    optimizer_state: Dict[str, np.ndarray] = field(default_factory=dict)
    optimizer_groups: Optional[list] = None
    version: str = ""

    def apply_to(self, model: nn.Module):
        """严格按名称载入参数，名称或形状不一致时报错"""
        state = model.state_dict()
        missing = sorted(set(state) - set(self.params))
        unexpected = sorted(set(self.params) - set(state))
        if missing or unexpected:
            raise CheckpointError(
                f"checkpoint does not match model: missing={missing[:5]} unexpected={unexpected[:5]}",
                missing=len(missing), unexpected=len(unexpected),
            )
        model.load_state_dict(_to_tensors(self.params, state), strict=True)

    def apply_optimizer(self, optimizer: torch.optim.Optimizer):
        if self.optimizer_groups is None:
            logger.warning("checkpoint has no optimizer state, optimizer starts fresh")
            return
        per_param: Dict[int, Dict[str, torch.Tensor]] = {}
        for key, value in self.optimizer_state.items():
            index, name = key.split("/", 1)
            per_param.setdefault(int(index), {})[name] = torch.from_numpy(np.array(value))
        optimizer.load_state_dict({"state": per_param, "param_groups": self.optimizer_groups})


def _to_tensors(arrays: Dict[str, np.ndarray], reference: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    tensors = {}
    for name, array in arrays.items():
        target = reference[name]
        if tuple(array.shape) != tuple(target.shape):
            raise CheckpointError(
                f"shape mismatch for '{name}': checkpoint {tuple(array.shape)} vs model {tuple(target.shape)}"
            )
        tensors[name] = torch.from_numpy(np.array(array)).to(dtype=target.dtype, device=target.device)
    return tensors


def save_checkpoint(path: Union[str, Path], model: nn.Module,
                    optimizer: Optional[torch.optim.Optimizer] = None,
                    config_text: str = "", step: int = 0, epoch: int = 0,
                    best_miou: Optional[float] = None, version: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: Dict[str, np.ndarray] = {}
    for name, tensor in model.state_dict().items():
        arrays[PARAM_PREFIX + name] = tensor.detach().cpu().numpy()
    if optimizer is not None:
        state = optimizer.state_dict()
        for index, param_state in state["state"].items():
            for key, value in param_state.items():
                value = value.detach().cpu().numpy() if torch.is_tensor(value) else np.asarray(value)
                arrays[f"{OPTIM_PREFIX}{index}/{key}"] = value
        arrays[META_PREFIX + "optim_groups"] = np.array(json.dumps(state["param_groups"]))
    arrays[META_PREFIX + "format_version"] = np.array(FORMAT_VERSION)
    arrays[META_PREFIX + "config"] = np.array(config_text)
    arrays[META_PREFIX + "step"] = np.array(int(step))
    arrays[META_PREFIX + "epoch"] = np.array(int(epoch))
    arrays[META_PREFIX + "best_miou"] = np.array(np.nan if best_miou is None else float(best_miou))
    arrays[META_PREFIX + "version"] = np.array(version)

    # 先写临时文件再替换，避免中断时留下半个存档
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    tmp_path = path.with_name(path.name + ".tmp")
    tmp_path.write_bytes(buffer.getvalue())
    os.replace(tmp_path, path)
    logger.debug(f"checkpoint saved: {path} (step={step}, epoch={epoch})")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise DataFileNotFoundError(f"missing file: {path}", path=str(path))
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    version = int(arrays.get(META_PREFIX + "format_version", np.array(-1)))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} in {path}")

    params = {k[len(PARAM_PREFIX):]: v for k, v in arrays.items() if k.startswith(PARAM_PREFIX)}
    optimizer_state = {k[len(OPTIM_PREFIX):]: v for k, v in arrays.items() if k.startswith(OPTIM_PREFIX)}
    groups = arrays.get(META_PREFIX + "optim_groups")
    best = float(arrays[META_PREFIX + "best_miou"])
    return Checkpoint(
        params=params,
        config_text=str(arrays[META_PREFIX + "config"]),
        step=int(arrays[META_PREFIX + "step"]),
        epoch=int(arrays[META_PREFIX + "epoch"]),
        best_miou=None if np.isnan(best) else best,
        optimizer_state=optimizer_state,
        optimizer_groups=None if groups is None else json.loads(str(groups)),
        version=str(arrays.get(META_PREFIX + "version", np.array(""))),
    )


def import_backbone_weights(model: nn.Module, path: Union[str, Path],
                            prefixes: Iterable[str] = ENCODER_PREFIXES) -> Dict[str, int]:
    """从本仓库格式的存档中按名称导入编码器权重

    缺失或多余的名称只记录日志，形状不一致报错
    """
    checkpoint = load_checkpoint(path)
    prefixes = tuple(prefixes)
    state = model.state_dict()
    wanted = {name for name in state if name.startswith(prefixes)}
    offered = {name: array for name, array in checkpoint.params.items() if name.startswith(prefixes)}
    missing = sorted(wanted - set(offered))
    unexpected = sorted(set(offered) - wanted)
    loaded = {name: offered[name] for name in wanted & set(offered)}
    model.load_state_dict(_to_tensors(loaded, state), strict=False)
    if missing:
        logger.warning(f"backbone import: {len(missing)} encoder tensors not in {path}, e.g. {missing[:3]}")
    if unexpected:
        logger.warning(f"backbone import: {len(unexpected)} unexpected tensors ignored, e.g. {unexpected[:3]}")
    logger.info(f"imported {len(loaded)} encoder tensors from {path}")
    return {"loaded": len(loaded), "missing": len(missing), "unexpected": len(unexpected)}
