from pathlib import Path

import allure
import numpy as np
import pytest

from common.io import read_label
from run_tests import VpfTestRunner
from run_vpfnet import VpfRunner

from conftest import TINY_CLASSES, TINY_SAMPLES, TINY_SIZE

CONFIG_FILE = str(Path(__file__).resolve().parent.parent / "config" / "config.ini")


def _argv(command, dataset_root, tmp_path, *extra):
    return [
        command,
        "--config", CONFIG_FILE,
        "--set", f"DATA.dataset_root={dataset_root}",
        "--set", f"DATA.num_classes={TINY_CLASSES}",
        "--set", f"DATA.image_size={TINY_SIZE[0]},{TINY_SIZE[1]}",
        "--set", f"DATA.n_samples={TINY_SAMPLES}",
        "--set", f"RUN.runs_root={tmp_path / 'runs'}",
        "--set", "EVAL.batch_size=3",
        "--precision", "float64",
        "--batch-size", "3",
        *extra,
    ]


def _error_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line.startswith("error=")]


@allure.epic("VPFNet")
@allure.feature("命令行")
@allure.story("退出码")
@pytest.mark.unit
class TestExitCodeCase:

    def test_unknown_config_key(self, tmp_path, capsys):
        code = VpfRunner().run(_argv("train", tmp_path / "data", tmp_path, "--set", "DATA.bogus=1"))
        assert code == 2
        assert _error_lines(capsys) == ["error=config message=unknown configuration key DATA.bogus"]

    def test_invalid_configuration(self, tmp_path, capsys):
        code = VpfRunner().run(_argv("train", tmp_path / "data", tmp_path, "--set", "MODEL.kernel_size=4"))
        assert code == 2
        assert "kernel_size" in _error_lines(capsys)[0]

    def test_malformed_override(self, tmp_path, capsys):
        assert VpfRunner().run(_argv("train", tmp_path / "data", tmp_path, "--set", "beta")) == 2
        assert _error_lines(capsys)[0].startswith("error=config message=override must look like")

    def test_missing_dataset(self, tmp_path, capsys):
        code = VpfRunner().run(_argv("train", tmp_path / "nowhere", tmp_path, "--run-dir", str(tmp_path / "run")))
        assert code == 9
        assert _error_lines(capsys)[0].startswith("error=io message=missing file")
        assert (tmp_path / "run" / "STATUS").read_text(encoding="utf-8") == "FAILED\n"

    def test_missing_checkpoint(self, synthetic_root, tmp_path, capsys):
        code = VpfRunner().run(_argv("eval", synthetic_root, tmp_path, "--checkpoint", str(tmp_path / "none.npz"),
                                     "--run-dir", str(tmp_path / "run")))
        assert code == 9
        assert _error_lines(capsys)

    def test_generation_needs_three_classes(self, tmp_path, capsys):
        code = VpfRunner().run(_argv("generate", tmp_path / "data", tmp_path, "--set", "DATA.num_classes=2"))
        assert code == 2
        assert "num_classes" in _error_lines(capsys)[0]

    def test_unknown_axis_is_rejected_by_parser(self, tmp_path):
        with pytest.raises(SystemExit):
            VpfRunner().run(_argv("ablate", tmp_path / "data", tmp_path, "--axis", "dropout"))


@allure.epic("VPFNet")
@allure.feature("命令行")
@allure.story("子命令")
@pytest.mark.integration
class TestCommandsCase:

    def test_generate(self, tmp_path, capsys):
        data = tmp_path / "data"
        argv = _argv("generate", data, tmp_path, "--run-dir", str(tmp_path / "gen"))
        assert VpfRunner().run(argv) == 0
        assert len((data / "train.txt").read_text(encoding="utf-8").split()) == 18
        assert (tmp_path / "gen" / "histogram.csv").is_file()
        assert (tmp_path / "gen" / "STATUS").read_text(encoding="utf-8") == "COMPLETED\n"

        with allure.step("目标目录非空且未指定 --force"):
            assert VpfRunner().run(_argv("generate", data, tmp_path, "--run-dir", str(tmp_path / "again"))) == 3
            assert _error_lines(capsys)[0].startswith("error=data message=target directory is not empty")
        assert VpfRunner().run(_argv("generate", data, tmp_path, "--force", "--run-dir", str(tmp_path / "f"))) == 0

    def test_train_eval_infer(self, synthetic_root, tmp_path):
        with allure.step("训练一轮"):
            code = VpfRunner().run(_argv("train", synthetic_root, tmp_path, "--epochs", "1", "--beta", "0.3",
                                         "--run-dir", str(tmp_path / "train")))
            assert code == 0
        checkpoint = tmp_path / "train" / "checkpoints" / "last.npz"
        assert checkpoint.is_file()
        assert "beta = 0.3" in (tmp_path / "train" / "config.ini").read_text(encoding="utf-8")

        with allure.step("评估并做缺失模态评估"):
            code = VpfRunner().run(_argv("eval", synthetic_root, tmp_path, "--checkpoint", str(checkpoint),
                                         "--num-samples", "2", "--robustness", "--run-dir", str(tmp_path / "eval")))
            assert code == 0
        metrics = (tmp_path / "eval" / "metrics.txt").read_text(encoding="utf-8").splitlines()
        assert "num_samples=2" in metrics
        assert "images=3" in metrics
        keys = {line.split("=", 1)[0] for line in metrics}
        assert {"overall.mIoU", "day.mIoU", "night.mIoU", "rgb_only.overall.mIoU",
                "thermal_only.overall.mIoU", "worst.overall.mIoU"} <= keys

        sample_id = (synthetic_root / "test.txt").read_text(encoding="utf-8").split()[0]
        rgb, thermal = synthetic_root / "rgb" / f"{sample_id}.png", synthetic_root / "thermal" / f"{sample_id}.png"
        with allure.step("单对图像推理"):
            code = VpfRunner().run(_argv("infer", synthetic_root, tmp_path, "--checkpoint", str(checkpoint),
                                         "--rgb", str(rgb), "--thermal", str(thermal),
                                         "--output", str(tmp_path / "out"), "--run-dir", str(tmp_path / "infer")))
            assert code == 0
        label = read_label(tmp_path / "out" / f"{sample_id}_label.png")
        assert tuple(label.shape) == TINY_SIZE
        assert int(label.max()) < TINY_CLASSES
        outputs = np.load(tmp_path / "out" / f"{sample_id}_outputs.npz")
        assert outputs["confidence"].shape == (TINY_CLASSES,) + TINY_SIZE
        assert np.allclose(outputs["confidence"].sum(axis=0), 1.0, atol=1e-6)
        assert {"W0", "M0", "V0", "W4"} <= set(outputs.files)
        assert (tmp_path / "out" / f"{sample_id}_W0.png").is_file()

        with allure.step("只给热红外图像"):
            code = VpfRunner().run(_argv("infer", synthetic_root, tmp_path, "--checkpoint", str(checkpoint),
                                         "--thermal", str(thermal), "--no-maps",
                                         "--output", str(tmp_path / "thermal_only"),
                                         "--run-dir", str(tmp_path / "infer2")))
            assert code == 0
        assert not list((tmp_path / "thermal_only").glob("*_W0.png"))

    def test_infer_without_inputs(self, synthetic_root, tmp_path, capsys):
        trained = tmp_path / "train"
        assert VpfRunner().run(_argv("train", synthetic_root, tmp_path, "--epochs", "1",
                                     "--run-dir", str(trained))) == 0
        code = VpfRunner().run(_argv("infer", synthetic_root, tmp_path,
                                     "--checkpoint", str(trained / "checkpoints" / "last.npz"),
                                     "--run-dir", str(tmp_path / "infer")))
        assert code == 3
        assert _error_lines(capsys)[0] == "error=data message=both modalities missing"


@allure.epic("VPFNet")
@allure.feature("命令行")
@allure.story("测试执行脚本")
@pytest.mark.unit
class TestRunTestsScriptCase:

    def test_build_command(self, monkeypatch):
        monkeypatch.delenv("VPF_RUN_SLOW", raising=False)
        runner = VpfTestRunner()
        runner.args = runner.parse_arguments(["-m", "slow", "-k", "kl", "--failfast", "--report-dir", "out"])
        cmd, env = runner.build_command()
        assert cmd[1:3] == ["-m", "pytest"]
        assert cmd[3:7] == ["-m", "slow", "-k", "kl"]
        assert "--exitfirst" in cmd
        assert cmd[-1] == f"--alluredir={Path('out').resolve()}"
        assert env["VPF_RUN_SLOW"] == "1"

    def test_fast_run_leaves_slow_tests_skipped(self, monkeypatch):
        monkeypatch.delenv("VPF_RUN_SLOW", raising=False)
        runner = VpfTestRunner()
        runner.args = runner.parse_arguments(["-m", "unit"])
        _, env = runner.build_command()
        assert "VPF_RUN_SLOW" not in env
