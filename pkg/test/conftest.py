"""测试公共夹具"""
import os
from pathlib import Path

import pytest
import torch

from core.config import RunConfig
from model.enum import Precision
from utils.generator import SyntheticDatasetGenerator, GeneratorConfig

SLOW_ENABLED = os.environ.get("VPF_RUN_SLOW") == "1"

# 耗时的验收用例只在 VPF_RUN_SLOW=1 时运行
slow = pytest.mark.skipif(not SLOW_ENABLED, reason="set VPF_RUN_SLOW=1 to run slow acceptance tests")

TINY_SIZE = (32, 32)
TINY_SAMPLES = 24
TINY_CLASSES = 4


@pytest.fixture
def float64():
    """在用例内把默认浮点类型切换为 float64"""
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield torch.float64
    torch.set_default_dtype(previous)


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory) -> Path:
    """24 张 32×32、4 类的合成数据集（train 18 / val 3 / test 3）"""
    root = tmp_path_factory.mktemp("synthetic") / "dataset"
    SyntheticDatasetGenerator(GeneratorConfig(size=TINY_SIZE, n_samples=TINY_SAMPLES,
                                              num_classes=TINY_CLASSES, seed=0)).generate(root)
    return root


def make_config(dataset_root: Path, runs_root: Path, **sections) -> RunConfig:
    """小规模运行配置：float64、2 轮、批大小 3"""
    config = RunConfig().replace(
        data={"dataset_root": str(dataset_root), "num_classes": TINY_CLASSES, "image_size": TINY_SIZE,
              "n_samples": TINY_SAMPLES},
        train={"epochs": 2, "batch_size": 3, "lr": 1e-3, "precision": Precision.FLOAT64},
        eval={"batch_size": 3},
        run={"runs_root": str(runs_root)},
    )
    if sections:
        config = config.replace(**sections)
    return config.validate()


@pytest.fixture
def tiny_config(synthetic_root, tmp_path) -> RunConfig:
    return make_config(synthetic_root, tmp_path / "runs")
