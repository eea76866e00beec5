"""类别权重缓存：纯文本，每行一个权重，行号即类别号"""
from pathlib import Path
from typing import Union

import torch

from common.errors import DataError, DataFileNotFoundError
from model.entity import ClassWeights


def write_class_weights(path: Union[str, Path], weights: ClassWeights) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{float(w):.17g}" for w in weights.weights.detach().cpu().double()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_class_weights(path: Union[str, Path], num_classes: int = None) -> ClassWeights:
    path = Path(path)
    if not path.is_file():
        raise DataFileNotFoundError(f"missing file: {path}", path=str(path))
    values = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            values.append(float(line))
        except ValueError as e:
            raise DataError(f"malformed class weight on line {number} of {path}: {line!r}") from e
    if num_classes is not None and len(values) != num_classes:
        raise DataError(f"{path} holds {len(values)} weights, expected {num_classes}")
    return ClassWeights(torch.tensor(values, dtype=torch.float64))
