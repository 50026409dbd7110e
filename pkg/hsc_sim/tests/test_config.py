#!/usr/bin/env python3
import pytest

from hsc_sim.errors import ConfigError
from hsc_sim.hsc_config import (
    DATA_ROOT_ENV,
    ExperimentConfig,
    load_config,
    parse_config_text,
    parse_value,
)


class TestParseValue:
    def test_scalars(self):
        assert parse_value("k", "64") == 64
        assert parse_value("mu", "0.5") == 0.5
        assert parse_value("synthetic", "True") is True
        assert parse_value("channel", " fading ") == "fading"

    def test_lists(self):
        assert parse_value("d_sweep", "0, 4,8") == [0, 4, 8]
        assert parse_value("snr_db", "0,2.5") == [0.0, 2.5]
        assert parse_value("seeds", "") == []

    def test_optional(self):
        assert parse_value("d", "none") is None
        assert parse_value("d", "6") == 6
        assert parse_value("cr_chain", "false") is False
        assert parse_value("data_root", "/data/mnist") == "/data/mnist"

    def test_bad_bool(self):
        with pytest.raises(ConfigError):
            parse_value("synthetic", "yes")

    def test_bad_number(self):
        with pytest.raises(ConfigError):
            parse_value("k", "many")

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_value("learning_rat", "0.1")


class TestParseConfigText:
    def test_comments_and_blank_lines(self):
        text = "# sweep\n\nscenario = fig3_fixed_load  # fixed load\nk = 32\n"
        assert parse_config_text(text) == {"scenario": "fig3_fixed_load", "k": 32}

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_config_text("k 32")


class TestLoadConfig:
    def test_defaults(self):
        config = load_config(environ={})
        assert config == ExperimentConfig()

    def test_overrides_win_over_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("k = 32\nseed = 4\n")
        config = load_config(str(path), {"k": 16, "seed": None}, environ={})
        assert config.k == 16
        assert config.seed == 4

    def test_data_root_from_environment(self):
        assert load_config(environ={DATA_ROOT_ENV: "/mnist"}).data_root == "/mnist"

    def test_file_data_root_wins(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("data_root = /from/file\n")
        config = load_config(str(path), environ={DATA_ROOT_ENV: "/mnist"})
        assert config.data_root == "/from/file"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.cfg"), environ={})

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            load_config(overrides={"colour": True}, environ={})

    @pytest.mark.parametrize(
        "overrides",
        [
            {"scenario": "fig5"},
            {"channel": "rician"},
            {"eig_method": "qr"},
            {"k": 0},
            {"workers": 0},
            {"seeds": []},
            {"snr_db": []},
            {"source_ratio": 1.5},
            {"d_sweep": [-1]},
            {"mu": 0.0},
        ],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            load_config(overrides=overrides, environ={})


class TestExperimentConfig:
    def test_chain_only_for_fading_by_default(self):
        assert ExperimentConfig(scenario="fig4_fading").uses_chain
        assert not ExperimentConfig(scenario="fig3_fixed_load").uses_chain
        assert ExperimentConfig(scenario="custom", cr_chain=True).uses_chain

    def test_ranks_checked_against_side(self):
        config = ExperimentConfig(d_sweep=[0, 4], dump_d=[2], adapter_d=[0])
        config.check_ranks(4)
        with pytest.raises(ConfigError):
            config.check_ranks(3)

    def test_default_ranks_fit_mnist(self):
        ExperimentConfig().check_ranks(28)
