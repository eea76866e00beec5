"""公开数据集布局到规范化布局的转换

- MFNet: images/<id>.png 为 4 通道 RGBT，labels/<id>.png，{train,val,test}.txt；
  id 以 D/N 结尾表示白天/夜间，带 _flip 后缀的是官方提供的翻转增强文件
- PST900: {train,test}/{rgb,thermal,labels}/<name>.png，全部为夜间场景
"""
import shutil
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from common.errors import DataError, DataFileNotFoundError
from common.io import read_rgbt, read_rgb, read_gray, read_label, write_rgb, write_gray, write_label
from common.log import Logger
from core.manager.dataset_manager import read_manifest
from model.entity import DatasetSpec, SPLITS
from model.enum import DatasetKind, Illumination

logger = Logger().get_logger()

FLIP_SUFFIX = "_flip"
MFNET_CLASSES = ["unlabeled", "car", "person", "bike", "curve", "car_stop", "guardrail", "color_cone", "bump"]
PST900_CLASSES = ["background", "fire_extinguisher", "backpack", "hand_drill", "survivor"]
PST900_VAL_EVERY = 10


def _prepare_target(dst_root: Path, force: bool) -> None:
    if dst_root.exists() and any(dst_root.iterdir()):
        if not force:
            raise DataError(f"target directory is not empty: {dst_root} (use --force to overwrite)")
        shutil.rmtree(dst_root)
    for sub in ("rgb", "thermal", "labels"):
        (dst_root / sub).mkdir(parents=True, exist_ok=True)


def _write_manifests(dst_root: Path, splits: Dict[str, List[str]], illumination: Dict[str, Illumination]) -> None:
    for split in SPLITS:
        (dst_root / f"{split}.txt").write_text("".join(f"{i}\n" for i in splits.get(split, [])), encoding="utf-8")
    lines = [f"{sample_id} {value.name_value}" for sample_id, value in sorted(illumination.items())]
    (dst_root / "illumination.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def mfnet_illumination(sample_id: str) -> Illumination:
    """由 id 后缀判断光照：...D 为白天，...N 为夜间"""
    stem = sample_id[:-len(FLIP_SUFFIX)] if sample_id.endswith(FLIP_SUFFIX) else sample_id
    if stem.endswith("D"):
        return Illumination.DAY
    if stem.endswith("N"):
        return Illumination.NIGHT
    raise DataError(f"cannot infer illumination from MFNet id '{sample_id}'")


def convert_mfnet(src_root: Union[str, Path], dst_root: Union[str, Path], include_flipped: bool = False,
                  force: bool = False, resize: Optional[Tuple[int, int]] = None) -> DatasetSpec:
    src_root, dst_root = Path(src_root), Path(dst_root)
    _prepare_target(dst_root, force)
    splits: Dict[str, List[str]] = {}
    illumination: Dict[str, Illumination] = {}
    skipped = 0
    for split in SPLITS:
        kept = []
        for sample_id in read_manifest(src_root / f"{split}.txt"):
            if sample_id.endswith(FLIP_SUFFIX) and not include_flipped:
                skipped += 1
                continue
            rgbt = read_rgbt(src_root / "images" / f"{sample_id}.png")
            write_rgb(dst_root / "rgb" / f"{sample_id}.png", rgbt[:3])
            write_gray(dst_root / "thermal" / f"{sample_id}.png", rgbt[3:])
            write_label(dst_root / "labels" / f"{sample_id}.png", read_label(src_root / "labels" / f"{sample_id}.png"))
            illumination[sample_id] = mfnet_illumination(sample_id)
            kept.append(sample_id)
        splits[split] = kept
    _write_manifests(dst_root, splits, illumination)
    logger.info(f"converted MFNet {src_root} -> {dst_root}: "
                f"{ {k: len(v) for k, v in splits.items()} }, skipped {skipped} flipped ids")
    return DatasetSpec(root=dst_root, num_classes=len(MFNET_CLASSES), class_names=list(MFNET_CLASSES),
                       resize=resize, kind=DatasetKind.MFNET)


def convert_pst900(src_root: Union[str, Path], dst_root: Union[str, Path], force: bool = False,
                   resize: Optional[Tuple[int, int]] = (640, 1280)) -> DatasetSpec:
    """验证集取训练集中每第 10 个样本，与训练集互不相交"""
    src_root, dst_root = Path(src_root), Path(dst_root)
    _prepare_target(dst_root, force)
    splits: Dict[str, List[str]] = {"train": [], "val": [], "test": []}
    illumination: Dict[str, Illumination] = {}
    for source_split in ("train", "test"):
        rgb_dir = src_root / source_split / "rgb"
        if not rgb_dir.is_dir():
            raise DataFileNotFoundError(f"missing directory: {rgb_dir}", path=str(rgb_dir))
        for position, rgb_path in enumerate(sorted(rgb_dir.glob("*.png"))):
            sample_id = f"{source_split}_{rgb_path.stem}"
            write_rgb(dst_root / "rgb" / f"{sample_id}.png", read_rgb(rgb_path))
            write_gray(dst_root / "thermal" / f"{sample_id}.png",
                       read_gray(src_root / source_split / "thermal" / rgb_path.name))
            write_label(dst_root / "labels" / f"{sample_id}.png",
                        read_label(src_root / source_split / "labels" / rgb_path.name))
            illumination[sample_id] = Illumination.NIGHT
            if source_split == "train" and position % PST900_VAL_EVERY == PST900_VAL_EVERY - 1:
                splits["val"].append(sample_id)
            else:
                splits[source_split].append(sample_id)
    _write_manifests(dst_root, splits, illumination)
    logger.info(f"converted PST900 {src_root} -> {dst_root}: { {k: len(v) for k, v in splits.items()} }")
    return DatasetSpec(root=dst_root, num_classes=len(PST900_CLASSES), class_names=list(PST900_CLASSES),
                       resize=resize, kind=DatasetKind.PST900)
