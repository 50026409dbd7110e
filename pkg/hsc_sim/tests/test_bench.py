#!/usr/bin/env python3
import pytest
import logging
import os

import numpy as np

from hsc_sim.errors import ConfigError, MissingCheckpoint
from hsc_sim.hsc_bench import (
    CSV_COLUMNS,
    CSV_SCHEMA,
    LinkSettings,
    ModelStore,
    SweepRunner,
    crossover_eta,
    finetune_config,
    load_dataset,
    mean_and_se,
    read_records,
    run_oracles,
    sr_only_reference,
)
from hsc_sim.hsc_adaptation import AdapterPair, AdapterRegistry
from hsc_sim.hsc_channel import ChannelMode
from hsc_sim.hsc_codec import CodecArchitecture, CodecParameters
from hsc_sim.hsc_config import ExperimentConfig
from hsc_sim.hsc_cr import payload_ratio
from hsc_sim.hsc_data import read_pnm


def tiny_config(tmp_path, **overrides) -> ExperimentConfig:
    settings = dict(
        out=str(tmp_path / "out"),
        checkpoint_dir=str(tmp_path / "checkpoints"),
        synthetic=True,
        synthetic_side=4,
        train_images=16,
        eval_images=3,
        k=2,
        k_sweep=[1, 2],
        hidden_sizes=[8],
        epochs=1,
        batch_size=8,
        d_sweep=[0, 2, 4],
        dump_d=[0, 2],
        adapter_d=[0, 2],
        seeds=[0, 1],
        finetune_budget=8,
        finetune_epochs=1,
    )
    settings.update(overrides)
    config = ExperimentConfig(**settings)
    config.validate()
    return config


@pytest.fixture
def logger():
    return logging.Logger("test_bench", level=logging.INFO)


def stored_models(logger, config: ExperimentConfig, variants=("vae",)) -> ModelStore:
    """Untrained transceivers are enough for the sweep bookkeeping."""
    store = ModelStore(logger, config.checkpoint_dir)
    rng = np.random.default_rng(0)
    side = config.synthetic_side
    for variant in variants:
        for k in set(config.k_sweep) | {config.k}:
            architecture = CodecArchitecture(side * side, tuple(config.hidden_sizes), k)
            store.save(variant, k, CodecParameters.initialize(architecture, rng, variant, 4))
    return store


def runner_for(logger, config: ExperimentConfig, store: ModelStore) -> SweepRunner:
    _, evaluation = load_dataset(config)
    return SweepRunner(logger, config, store, evaluation)


class TestHelpers:
    def test_mean_and_se(self):
        mean, se = mean_and_se([1.0, 2.0, 3.0])
        assert mean == 2.0
        assert se == pytest.approx(1.0 / np.sqrt(3.0))

    def test_single_value_has_no_spread(self):
        assert mean_and_se([4.0]) == (4.0, 0.0)

    def test_crossover(self):
        rows = [(0.5, 1, 1, 0.2, 0.1, False), (0.7, 1, 2, 0.05, 0.08, True), (0.9, 1, 3, 0.01, 0.07, True)]
        assert crossover_eta(rows) == 0.7
        assert crossover_eta(rows[:1]) is None

    def test_sr_only_reference_inside_range(self):
        assert sr_only_reference(0.3, [0.2, 0.4], [1.0, 3.0]) == pytest.approx(2.0)
        assert sr_only_reference(0.4, [0.2, 0.4], [1.0, 3.0]) == 3.0

    def test_sr_only_reference_outside_range(self):
        assert sr_only_reference(0.5, [0.2, 0.4], [1.0, 3.0]) is None
        assert sr_only_reference(0.1, [0.2, 0.4], [1.0, 3.0]) is None
        assert sr_only_reference(0.3, [], []) is None

    def test_error_free_link_has_no_snr(self):
        assert LinkSettings().mean_snr is None
        assert LinkSettings(ChannelMode.AWGN, (0.0, 10.0)).mean_snr == 5.0

    def test_finetune_batch_fits_budget(self, tmp_path):
        assert finetune_config(tiny_config(tmp_path, batch_size=64)).batch_size == 8

    def test_dataset_needs_a_source(self, tmp_path):
        with pytest.raises(ConfigError):
            load_dataset(tiny_config(tmp_path, synthetic=False))

    def test_synthetic_split(self, tmp_path):
        train, evaluation = load_dataset(tiny_config(tmp_path))
        assert train.shape == (16, 4, 4)
        assert evaluation.shape == (3, 4, 4)


class TestSweepRunner:
    def test_custom_sweep(self, logger, tmp_path):
        config = tiny_config(tmp_path)
        path = runner_for(logger, config, stored_models(logger, config)).run("custom")
        assert path == os.path.join(config.out, "custom.csv")
        with open(path) as f:
            assert f.readline().strip() == ",".join(CSV_COLUMNS)
        rows = read_records(path)
        assert [int(row["d"]) for row in rows] == [0, 2, 4]
        for row in rows:
            assert row["schema"] == CSV_SCHEMA
            assert row["snr_db"] == ""
            assert row["wall_time"] == ""
            assert row["seed"] == "0;1"
            assert float(row["eta"]) == pytest.approx(payload_ratio(2, 0.8, 4, int(row["d"])).eta_value)
            # exact CR delivery over an error-free link
            assert float(row["mse_recomposed"]) == pytest.approx(float(row["mse_closed_form"]), rel=1e-8, abs=1e-15)
        assert float(rows[-1]["mse_recomposed"]) < 1e-20
        assert float(rows[0]["mse_recomposed"]) == pytest.approx(float(rows[0]["mse_generated"]))

    def test_csv_is_reproducible(self, logger, tmp_path):
        config = tiny_config(tmp_path, workers=3)
        store = stored_models(logger, config)
        path = runner_for(logger, config, store).run("custom")
        first = open(path).read()
        runner_for(logger, config, store).run("custom")
        assert open(path).read() == first

    def test_single_rank(self, logger, tmp_path):
        config = tiny_config(tmp_path, d=1)
        rows = read_records(runner_for(logger, config, stored_models(logger, config)).run("custom"))
        assert [row["d"] for row in rows] == ["1"]

    def test_chain_through_awgn(self, logger, tmp_path):
        config = tiny_config(tmp_path, channel="awgn", snr_db=[20.0], cr_chain=True)
        rows = read_records(runner_for(logger, config, stored_models(logger, config)).run("custom"))
        assert all(row["snr_db"] == "20.0" for row in rows)
        assert all(np.isfinite(float(row["mse_recomposed"])) for row in rows)

    def test_fig2(self, logger, tmp_path):
        config = tiny_config(tmp_path)
        store = stored_models(logger, config, ("vae", "vqvae"))
        rows = read_records(runner_for(logger, config, store).run("fig2_vqvae"))
        sc = [row for row in rows if row["curve"] == "sc"]
        hsc = [row for row in rows if row["curve"] == "hsc"]
        assert [row["k"] for row in sc] == ["1", "2"]
        assert all(row["d"] == "0" for row in sc)
        assert [row["d"] for row in hsc] == ["0", "2", "4"]
        assert all(row["codec"] == "vqvae" for row in rows)

    def test_fig3_summary(self, logger, tmp_path):
        config = tiny_config(tmp_path)
        rows = read_records(runner_for(logger, config, stored_models(logger, config)).run("fig3_fixed_load"))
        assert sum(row["curve"] == "sr_only" for row in rows) == 2
        hybrid = [row for row in rows if row["curve"] == "hybrid"]
        assert len(hybrid) == 4
        summary = read_records(os.path.join(config.out, "fig3_fixed_load_summary.csv"))
        assert len(summary) == len(hybrid)
        assert all(row["cr_beneficial"] in ("true", "false") for row in summary)
        sr_etas = [float(row["eta"]) for row in rows if row["curve"] == "sr_only"]
        for row in summary:
            if float(row["eta"]) > max(sr_etas):
                assert row["mse_sr_only"] == ""
                assert row["cr_beneficial"] == "false"

    def test_missing_model(self, logger, tmp_path):
        config = tiny_config(tmp_path)
        store = ModelStore(logger, config.checkpoint_dir)
        with pytest.raises(MissingCheckpoint):
            runner_for(logger, config, store).run("custom")

    def test_fig4_needs_adaptation(self, logger, tmp_path):
        config = tiny_config(tmp_path, scenario="fig4_fading")
        with pytest.raises(MissingCheckpoint):
            runner_for(logger, config, stored_models(logger, config)).run()

    def test_fig4_end_to_end(self, logger, tmp_path):
        config = tiny_config(tmp_path, scenario="fig4_fading", adapter_d=[0, 2, 4])
        store = stored_models(logger, config)
        rng = np.random.default_rng(1)
        architecture = CodecArchitecture(16, tuple(config.hidden_sizes), config.k)
        store.save_finetuned(config.k, CodecParameters.initialize(architecture, rng))
        registry = AdapterRegistry(logger)
        for d in config.adapter_d:
            registry.register(AdapterPair.initialize(config.k, 16, d, rng, decoder_hidden=8))
        store.save_adapters(config.k, registry)

        path = runner_for(logger, config, store).run()
        assert path == os.path.join(config.out, "fig4_fading.csv")
        with open(path) as f:
            assert f.readline().strip() == ",".join(CSV_COLUMNS)
        rows = read_records(path)
        assert len(rows) == 4 * len(config.adapter_d)
        assert all(row["schema"] == CSV_SCHEMA and row["scenario"] == "fig4_fading" for row in rows)
        for curve in ("error_free", "fading", "finetune", "ncr"):
            assert [int(row["d"]) for row in rows if row["curve"] == curve] == config.adapter_d
        for row in rows:
            assert row["snr_db"] == ("" if row["curve"] == "error_free" else "2.5")
            assert np.isfinite(float(row["mse_recomposed"]))
        # untrained adapters start as the identity, so the ncr curve repeats finetune
        finetune_rows = [row for row in rows if row["curve"] == "finetune"]
        ncr_rows = [row for row in rows if row["curve"] == "ncr"]
        for tuned, adapted in zip(finetune_rows, ncr_rows):
            assert float(adapted["mse_generated"]) == pytest.approx(float(tuned["mse_generated"]))

    def test_rank_beyond_side(self, logger, tmp_path):
        config = tiny_config(tmp_path, d_sweep=[0, 5])
        with pytest.raises(ConfigError):
            runner_for(logger, config, ModelStore(logger, config.checkpoint_dir))

    def test_dump(self, logger, tmp_path):
        config = tiny_config(tmp_path, dump_images=2)
        paths = runner_for(logger, config, stored_models(logger, config)).dump()
        assert len(paths) == 2 * (1 + 2 * 2)
        assert os.path.basename(paths[1]) == "img000_d00_generated.pgm"
        recomposed = read_pnm(os.path.join(config.out, "img001_d02_recomposed.pgm"))
        assert recomposed.shape == (4, 4)


class TestOracles:
    def test_fast_suite_passes(self, logger):
        results = run_oracles(logger, seed=0, fast=True)
        assert [r.name for r in results if not r.passed] == []
        assert {r.name for r in results} >= {"closed_form_mse", "optimal_projection", "chain_ber_20db"}
