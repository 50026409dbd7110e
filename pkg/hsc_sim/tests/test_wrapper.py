#!/usr/bin/env python3
import pytest
import logging
import os

from hsc_sim import wrapper as wrapper_module
from hsc_sim.hsc_adaptation import NcrAdapterTrainer
from hsc_sim.hsc_bench import chain_spec, read_records
from hsc_sim.hsc_config import ExperimentConfig
from hsc_sim.hsc_digital import DigitalChain
from hsc_sim.wrapper import HscWrapper


def tiny_config(tmp_path, **overrides) -> ExperimentConfig:
    settings = dict(
        out=str(tmp_path / "out"),
        checkpoint_dir=str(tmp_path / "checkpoints"),
        synthetic=True,
        synthetic_side=4,
        train_images=16,
        eval_images=2,
        k=2,
        k_sweep=[2],
        hidden_sizes=[8],
        epochs=1,
        batch_size=8,
        d_sweep=[0, 4],
        dump_d=[2],
        dump_images=1,
        adapter_d=[0, 2],
        seeds=[0],
        finetune_budget=8,
        finetune_epochs=1,
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


@pytest.fixture
def logger():
    return logging.Logger("test_wrapper", level=logging.INFO)


class TestHscWrapper:
    def test_train_and_sweep(self, logger, tmp_path):
        wrapper = HscWrapper(logger, tiny_config(tmp_path))
        success, _ = wrapper.train("vae")
        assert success
        assert os.path.exists(wrapper.store.codec_path("vae", 2))
        success, message = wrapper.sweep()
        assert success, message
        assert wrapper.exit_code == 0
        assert len(read_records(os.path.join(wrapper.config.out, "custom.csv"))) == 2

    def test_unknown_variant(self, logger, tmp_path):
        wrapper = HscWrapper(logger, tiny_config(tmp_path))
        success, message = wrapper.train("gan")
        assert not success
        assert "gan" in message
        assert wrapper.exit_code == 1

    def test_sweep_without_models(self, logger, tmp_path):
        wrapper = HscWrapper(logger, tiny_config(tmp_path))
        success, message = wrapper.sweep()
        assert not success
        assert "hsc-sim train" in message
        assert wrapper.exit_code == 1

    def test_adaptation_pipeline(self, logger, tmp_path):
        wrapper = HscWrapper(logger, tiny_config(tmp_path, scenario="fig4_fading"))
        assert wrapper.train("vae")[0]
        assert wrapper.finetune()[0]
        assert os.path.exists(wrapper.store.finetuned_path(2))
        assert wrapper.train_adapters()[0]
        assert sorted(os.listdir(wrapper.store.adapter_dir(2))) == ["adapters_d0.hscm", "adapters_d2.hscm"]
        success, message = wrapper.sweep()
        assert success, message
        rows = read_records(os.path.join(wrapper.config.out, "fig4_fading.csv"))
        assert [row["curve"] for row in rows[:4]] == ["error_free", "fading", "finetune", "ncr"]
        assert len(rows) == 8
        assert wrapper.dump()[0]
        assert os.path.exists(os.path.join(wrapper.config.out, "img000_d02_recomposed.pgm"))

    def test_adapters_train_through_chain_by_default(self, logger, tmp_path, monkeypatch):
        chains = []

        class RecordingTrainer(NcrAdapterTrainer):
            def __init__(self, logger, cfg, chain=None):
                chains.append(chain)
                super().__init__(logger, cfg, chain)

        monkeypatch.setattr(wrapper_module, "NcrAdapterTrainer", RecordingTrainer)
        wrapper = HscWrapper(logger, tiny_config(tmp_path, adapter_d=[2]))
        assert wrapper.config.scenario == "custom"
        assert wrapper.train("vae")[0]
        assert wrapper.finetune()[0]
        assert wrapper.train_adapters()[0]
        assert len(chains) == 1
        assert isinstance(chains[0], DigitalChain)
        assert chains[0].spec == chain_spec(wrapper.config)

    def test_adapters_need_finetuned_model(self, logger, tmp_path):
        wrapper = HscWrapper(logger, tiny_config(tmp_path))
        assert wrapper.train("vae")[0]
        success, message = wrapper.train_adapters()
        assert not success
        assert "hsc-sim finetune" in message

    def test_verify(self, logger, tmp_path):
        wrapper = HscWrapper(logger, tiny_config(tmp_path))
        success, message = wrapper.verify(fast=True)
        assert success, message
        assert wrapper.exit_code == 0
