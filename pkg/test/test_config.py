from pathlib import Path

import allure
import pytest

from common.errors import ConfigError
from core.config import ConfigManager, RunConfig, load_ablation_grid
from model.enum import BackboneVariant, DatasetKind, FusionMode, Modality, PriorCondition, Precision

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
GRID_FILE = str(CONFIG_DIR / "ablation.ini")


@allure.epic("VPFNet")
@allure.feature("配置管理")
@pytest.mark.unit
class TestRunConfigCase:

    @allure.story("默认值")
    def test_defaults(self):
        config = RunConfig().validate()
        assert (config.model.kernel_size, config.model.squeeze_ratio, config.model.latent_dim) == (7, 16, 8)
        assert config.loss.beta == 0.5
        assert config.loss.class_weight_k == 1.02
        assert config.train.batch_size == 3
        assert config.train.lr == 5e-5
        assert config.train.weight_decay == 5e-4
        assert config.train.epochs == 300
        assert config.eval.num_samples == 1
        assert config.model.backbone == BackboneVariant.TINY

    @allure.story("取值范围")
    @pytest.mark.parametrize("sections, fragment", [
        ({"model": {"kernel_size": 4}}, "kernel_size"),
        ({"model": {"squeeze_ratio": 0}}, "squeeze_ratio"),
        ({"model": {"latent_dim": 0}}, "latent_dim"),
        ({"loss": {"beta": -0.1}}, "beta"),
        ({"loss": {"class_weight_k": 1.0}}, "class_weight_k"),
        ({"data": {"num_classes": 1}}, "num_classes"),
        ({"data": {"crop_fraction": 0.0}}, "crop_fraction"),
        ({"data": {"split_fractions": (0.5, 0.2, 0.2)}}, "split_fractions"),
        ({"data": {"class_names": ["a", "b"]}}, "class_names"),
        ({"eval": {"num_samples": 0}}, "num_samples"),
        ({"train": {"lr": 0.0}}, "lr"),
        ({"train": {"epochs": 0}}, "epochs"),
        ({"data": {"image_size": (48, 64)}}, "image_size"),
    ])
    def test_validate_rejects(self, sections, fragment):
        with pytest.raises(ConfigError, match=fragment):
            RunConfig().replace(**sections).validate()

    def test_generation_needs_three_classes(self):
        config = RunConfig().replace(data={"num_classes": 2})
        config.validate()
        with pytest.raises(ConfigError, match="num_classes >= 3"):
            config.validate(for_generation=True)

    @allure.story("有效 β")
    @pytest.mark.parametrize("fusion, prior, expected", [
        (FusionMode.PROBABILISTIC, PriorCondition.BOTH, 0.5),
        (FusionMode.PROBABILISTIC, PriorCondition.NONE, 0.0),
        (FusionMode.ATTENTION, PriorCondition.BOTH, 0.0),
        (FusionMode.ADDITION, PriorCondition.BOTH, 0.0),
    ])
    def test_effective_beta(self, fusion, prior, expected):
        config = RunConfig().replace(model={"fusion_mode": fusion, "prior_condition": prior})
        assert config.effective_beta == expected

    @pytest.mark.parametrize("kind, explicit, expected", [
        (DatasetKind.MFNET, None, True),
        (DatasetKind.PST900, None, False),
        (DatasetKind.SYNTHETIC, None, False),
        (DatasetKind.MFNET, False, False),
        (DatasetKind.PST900, True, True),
    ])
    def test_background_exclusion_default(self, kind, explicit, expected):
        config = RunConfig().replace(data={"kind": kind}, eval={"exclude_background": explicit})
        assert config.exclude_background is expected

    @allure.story("配置回显")
    def test_ini_echo_round_trip(self):
        config = RunConfig().replace(
            data={"resize": (480, 640), "class_names": ["bg", "car", "person", "bike"]},
            model={"fusion_mode": FusionMode.ATTENTION},
            train={"precision": Precision.FLOAT64, "lr": 1e-4},
            eval={"missing_modality": Modality.RGB, "num_samples": 20},
        )
        assert RunConfig.from_ini(config.to_ini()) == config

    def test_network_spec_follows_model_section(self):
        config = RunConfig().replace(data={"num_classes": 9}, model={"latent_dim": 4,
                                                                     "prior_condition": PriorCondition.CATEGORY})
        spec = config.network_spec()
        assert spec.num_classes == 9
        assert spec.latent_dim == 4
        assert spec.prior_shape == (9, 1)


@allure.epic("VPFNet")
@allure.feature("配置管理")
@pytest.mark.unit
class TestConfigManagerCase:

    def _write(self, tmp_path, text):
        path = tmp_path / "config.ini"
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_reads_file_and_overrides(self, tmp_path):
        manager = ConfigManager(self._write(tmp_path, "[LOSS]\nbeta = 0.3\n[MODEL]\nkernel_size = 5\n"))
        manager.apply_overrides(["loss.beta=0.7", "EVAL.num_samples=20"])
        config = manager.run_config()
        assert config.loss.beta == 0.7
        assert config.model.kernel_size == 5
        assert config.eval.num_samples == 20

    def test_environment_variable_selects_file(self, tmp_path, monkeypatch):
        monkeypatch.setenv("VPF_CONFIG_FILE", self._write(tmp_path, "[TRAIN]\nepochs = 7\n"))
        assert ConfigManager().run_config().train.epochs == 7

    def test_missing_explicit_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ConfigManager(str(tmp_path / "nope.ini"))

    @pytest.mark.parametrize("text, fragment", [
        ("[MODEL]\nkernal_size = 5\n", "unknown configuration key"),
        ("[MODLE]\nkernel_size = 5\n", "unknown configuration sections"),
        ("[MODEL]\nkernel_size = five\n", "invalid value for MODEL.kernel_size"),
        ("[MODEL]\nfusion_mode = magic\n", "invalid value for MODEL.fusion_mode"),
    ])
    def test_bad_files(self, tmp_path, text, fragment):
        with pytest.raises(ConfigError, match=fragment):
            ConfigManager(self._write(tmp_path, text)).run_config()

    @pytest.mark.parametrize("override", ["beta=0.3", "LOSS.beta", "NOPE.beta=1", "LOSS.gamma=1"])
    def test_bad_overrides(self, tmp_path, override):
        manager = ConfigManager(self._write(tmp_path, ""))
        with pytest.raises(ConfigError):
            manager.apply_overrides([override])

    def test_repository_config_files_are_valid(self):
        config = ConfigManager(str(CONFIG_DIR / "config.ini")).run_config()
        assert config == RunConfig()
        grid = load_ablation_grid("beta", GRID_FILE)
        assert [float(v) for v in grid["values"]] == [0.0, 0.3, 0.5, 0.7, 1.0]
        assert load_ablation_grid("fusion", GRID_FILE)["values"] == \
            ["addition", "attention", "probabilistic"]
        assert load_ablation_grid("prior", GRID_FILE)["values"] == \
            ["none", "illumination", "category", "both"]

    def test_unknown_ablation_axis(self):
        with pytest.raises(ConfigError, match="no ablation grid"):
            load_ablation_grid("dropout", GRID_FILE)
