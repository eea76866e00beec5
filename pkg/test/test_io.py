import allure
import numpy as np
import pytest
import torch

from common.errors import CheckpointError, DataError, DataFileNotFoundError, OutOfRangeError
from common.io import (read_rgb, read_gray, read_label, write_rgb, write_gray, write_label, normalize_map,
                       save_checkpoint, load_checkpoint, import_backbone_weights, write_class_weights,
                       read_class_weights)
from core.network import NetworkSpec, build_network
from model.entity import ClassWeights
from model.enum import FusionMode


@allure.epic("VPFNet")
@allure.feature("文件读写")
@allure.story("PNG")
@pytest.mark.unit
class TestPngCase:

    def test_image_round_trip(self, tmp_path):
        rgb = torch.from_numpy(np.random.default_rng(0).integers(0, 256, (3, 8, 8))).float() / 255.0
        write_rgb(tmp_path / "a" / "rgb.png", rgb)
        assert torch.equal(read_rgb(tmp_path / "a" / "rgb.png"), rgb)

        gray = rgb[:1]
        write_gray(tmp_path / "gray.png", gray[0])
        assert torch.equal(read_gray(tmp_path / "gray.png"), gray)

    def test_label_round_trip(self, tmp_path):
        label = torch.randint(0, 9, (5, 7))
        write_label(tmp_path / "label.png", label)
        restored = read_label(tmp_path / "label.png")
        assert restored.dtype == torch.int64
        assert torch.equal(restored, label)

    def test_label_must_fit_in_8_bits(self, tmp_path):
        with pytest.raises(OutOfRangeError):
            write_label(tmp_path / "label.png", torch.tensor([[300]]))

    def test_missing_and_corrupt_files(self, tmp_path):
        with pytest.raises(DataFileNotFoundError, match="missing file"):
            read_rgb(tmp_path / "nope.png")
        broken = tmp_path / "broken.png"
        broken.write_bytes(b"not a png")
        with pytest.raises(DataError):
            read_label(broken)

    def test_normalize_map(self):
        assert torch.equal(normalize_map(torch.full((2, 2), 3.0)), torch.zeros(2, 2, dtype=torch.float64))
        values = normalize_map(torch.tensor([[-1.0, 1.0], [0.0, 3.0]]))
        assert float(values.min()) == 0.0 and float(values.max()) == 1.0


@allure.epic("VPFNet")
@allure.feature("文件读写")
@allure.story("检查点")
@pytest.mark.unit
class TestCheckpointCase:

    def _model(self, seed=0, **kwargs):
        return build_network(NetworkSpec(num_classes=3, **kwargs), seed=seed, dtype=torch.float64)

    def test_round_trip_with_optimizer(self, tmp_path):
        model = self._model()
        optimizer = torch.optim.AdamW(model.parameters(), lr=1e-3)
        rgb, thermal = torch.rand(2, 3, 32, 32, dtype=torch.float64), torch.rand(2, 1, 32, 32, dtype=torch.float64)
        model(rgb, thermal).logits.sum().backward()
        optimizer.step()

        path = save_checkpoint(tmp_path / "ckpt" / "last.npz", model, optimizer, config_text="[LOSS]\nbeta = 0.5\n",
                               step=7, epoch=2, best_miou=0.25, version="1.0.0")
        checkpoint = load_checkpoint(path)
        assert (checkpoint.step, checkpoint.epoch, checkpoint.best_miou) == (7, 2, 0.25)
        assert checkpoint.config_text.startswith("[LOSS]")
        assert checkpoint.version == "1.0.0"

        restored = self._model(seed=1)
        restored_optimizer = torch.optim.AdamW(restored.parameters(), lr=1e-3)
        checkpoint.apply_to(restored)
        checkpoint.apply_optimizer(restored_optimizer)
        for (name, a), (_, b) in zip(model.state_dict().items(), restored.state_dict().items()):
            assert torch.equal(a, b), name
        first_state = next(iter(restored_optimizer.state.values()))
        assert "exp_avg" in first_state

    def test_missing_best_miou(self, tmp_path):
        path = save_checkpoint(tmp_path / "c.npz", self._model())
        assert load_checkpoint(path).best_miou is None
        assert load_checkpoint(path).optimizer_groups is None

    def test_architecture_mismatch(self, tmp_path):
        path = save_checkpoint(tmp_path / "c.npz", self._model())
        with pytest.raises(CheckpointError, match="does not match model"):
            load_checkpoint(path).apply_to(self._model(fusion_mode=FusionMode.ADDITION))

    def test_missing_and_unreadable(self, tmp_path):
        with pytest.raises(DataFileNotFoundError):
            load_checkpoint(tmp_path / "none.npz")
        garbage = tmp_path / "garbage.npz"
        garbage.write_bytes(b"garbage")
        with pytest.raises(CheckpointError):
            load_checkpoint(garbage)

    def test_import_backbone_weights(self, tmp_path):
        source = self._model(seed=5)
        path = save_checkpoint(tmp_path / "backbone.npz", source)
        target = self._model(seed=6, fusion_mode=FusionMode.ATTENTION)
        counts = import_backbone_weights(target, path)
        assert counts["loaded"] > 0 and counts["missing"] == 0
        assert torch.equal(target.rgb_encoder.stages[0][0][0].weight, source.rgb_encoder.stages[0][0][0].weight)


@allure.epic("VPFNet")
@allure.feature("文件读写")
@allure.story("类别权重缓存")
@pytest.mark.unit
class TestClassWeightCacheCase:

    def test_round_trip(self, tmp_path):
        weights = ClassWeights(torch.tensor([1.5, 20.25, 3.0], dtype=torch.float64))
        path = write_class_weights(tmp_path / "class_weights.txt", weights)
        assert path.read_text(encoding="utf-8").splitlines()[1] == "20.25"
        assert torch.equal(read_class_weights(path, 3).weights, weights.weights)

    def test_wrong_count(self, tmp_path):
        path = write_class_weights(tmp_path / "w.txt", ClassWeights.uniform(2))
        with pytest.raises(DataError):
            read_class_weights(path, 3)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("1.0\nabc\n", encoding="utf-8")
        with pytest.raises(DataError, match="line 2"):
            read_class_weights(path)
