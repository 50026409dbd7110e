#!/usr/bin/env python3
import pytest
import os

from hsc_sim.cli import build_parser, main, overrides_from_args

CONFIG = """
synthetic = true
synthetic_side = 4
train_images = 16
eval_images = 2
k = 2
k_sweep = 2
hidden_sizes = 8
epochs = 1
batch_size = 8
d_sweep = 0, 2
dump_d = 2
adapter_d = 0
seeds = 0
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(CONFIG)
    return str(path)


def global_args(tmp_path, config_path):
    return [
        "--config",
        config_path,
        "--out",
        str(tmp_path / "out"),
        "--checkpoint-dir",
        str(tmp_path / "checkpoints"),
    ]


class TestParser:
    def test_overrides(self):
        args = build_parser().parse_args(["--snr", "0", "5", "--d", "3", "sweep", "fig3_fixed_load"])
        overrides = overrides_from_args(args)
        assert overrides["snr_db"] == [0.0, 5.0]
        assert overrides["d"] == 3
        assert overrides["scenario"] == "fig3_fixed_load"
        assert overrides["k"] is None

    def test_usage_error_exits_with_one(self):
        with pytest.raises(SystemExit) as e:
            build_parser().parse_args(["sweep", "fig9"])
        assert e.value.code == 1

    def test_command_required(self):
        with pytest.raises(SystemExit) as e:
            build_parser().parse_args([])
        assert e.value.code == 1


class TestMain:
    def test_train_then_sweep(self, tmp_path, config_path):
        common = global_args(tmp_path, config_path)
        assert main(common + ["train"]) == 0
        assert main(common + ["--d", "1", "sweep", "custom"]) == 0
        assert os.path.exists(tmp_path / "out" / "custom.csv")

    def test_missing_checkpoint(self, tmp_path, config_path):
        assert main(global_args(tmp_path, config_path) + ["sweep", "custom"]) == 1

    def test_missing_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.cfg"), "verify", "--fast"]) == 1

    def test_invalid_override(self, tmp_path, config_path):
        assert main(global_args(tmp_path, config_path) + ["--workers", "0", "verify"]) == 1

    def test_verify(self, tmp_path, config_path):
        assert main(global_args(tmp_path, config_path) + ["verify", "--fast"]) == 0
