import functools
import logging
import os
import typing

import numpy as np

from .errors import ConfigError, HscError, NumericalFailure
from .hsc_adaptation import AdapterRegistry, NcrAdapterTrainer, finetune
from .hsc_bench import (
    ModelStore,
    SweepRunner,
    chain_spec,
    finetune_config,
    load_dataset,
    run_oracles,
    training_config,
)
from .hsc_codec import CodecArchitecture, CodecTrainer
from .hsc_config import ExperimentConfig
from .hsc_digital import DigitalChain

VARIANTS = ("vae", "vqvae")


def report_status(func=None, *, needs_data=False):
    """
    Decorator which turns the library's typed errors into a (success, message) result

    the func=None and * args are required to allow this decorator to be used with or without arguments

    Args:
        func: Function that is being wrapped
        needs_data: If true, load the training and evaluation images before running

    Returns:
        Decorator which will wrap the decorated function
    """
    if func is None:
        return functools.partial(report_status, needs_data=needs_data)

    @functools.wraps(func)
    def wrapper_report_status(self, *args, **kwargs):
        try:
            if needs_data:
                self._ensure_data()
            result = func(self, *args, **kwargs)
        except HscError as e:
            self._exit_code = e.exit_code
            self._logger.error("%s failed: %s", func.__name__, e)
            return False, str(e)
        self._exit_code = 0
        return result

    return wrapper_report_status


class HscWrapper:
    """Runs training, adaptation, sweeps and checks for one experiment configuration"""

    def __init__(self, logger: logging.Logger, config: ExperimentConfig):
        self._logger = logger
        self._config = config
        self._store = ModelStore(logger, config.checkpoint_dir)
        self._train: typing.Optional[np.ndarray] = None
        self._evaluation: typing.Optional[np.ndarray] = None
        self._exit_code = 0

    @property
    def config(self) -> ExperimentConfig:
        return self._config

    @property
    def store(self) -> ModelStore:
        return self._store

    @property
    def exit_code(self) -> int:
        """Exit code of the last action: 0 success, 1 configuration or input error, 2 numerical failure"""
        return self._exit_code

    def _ensure_data(self):
        if self._train is None:
            self._train, self._evaluation = load_dataset(self._config)
            self._logger.info(
                "Loaded %d training and %d evaluation images of side %d",
                self._train.shape[0],
                self._evaluation.shape[0],
                self._train.shape[-1],
            )

    def _adapter_chain(self) -> DigitalChain:
        # adapters always learn the CR as the noisy chain delivers it
        return DigitalChain(self._logger, chain_spec(self._config))

    def _architecture(self, k: int) -> CodecArchitecture:
        side = self._train.shape[-1]
        return CodecArchitecture(
            input_size=side * side, hidden_sizes=tuple(self._config.hidden_sizes), k=k
        )

    @report_status(needs_data=True)
    def train(self, variant: str = "vae", ks: typing.Optional[typing.Sequence[int]] = None) -> typing.Tuple[bool, str]:
        """Train one transceiver per SR length over the error-free channel.

        Args:
            variant: "vae" or "vqvae"
            ks: SR lengths, the configured k and k_sweep when not given
        """
        if variant not in VARIANTS:
            raise ConfigError(f"Unknown transceiver variant {variant}, expected one of {VARIANTS}")
        if ks is None:
            ks = sorted(set(self._config.k_sweep) | {self._config.k})
        trainer = CodecTrainer(self._logger, training_config(self._config))
        for k in ks:
            self._logger.info("Training %s with k=%d", variant, k)
            if variant == "vae":
                params = trainer.train_elbo(self._train, self._architecture(k))
            else:
                params = trainer.train_vqvae(self._train, self._architecture(k))
            self._store.save(variant, k, params)
        return True, f"Trained {variant} for k={list(ks)}"

    @report_status(needs_data=True)
    def finetune(self) -> typing.Tuple[bool, str]:
        """Few-shot fine-tuning of the k-symbol VAE under fading"""
        base = self._store.load("vae", self._config.k)
        tuned = finetune(self._logger, base, finetune_config(self._config), self._train)
        path = self._store.save_finetuned(self._config.k, tuned)
        return True, f"Fine-tuned transceiver written to {path}"

    @report_status(needs_data=True)
    def train_adapters(self, ranks: typing.Optional[typing.Sequence[int]] = None) -> typing.Tuple[bool, str]:
        """Train one NCR adapter pair per CR rank around the fine-tuned transceiver"""
        base = self._store.load_finetuned(self._config.k)
        if ranks is None:
            ranks = [self._config.d] if self._config.d is not None else self._config.adapter_d
        self._config.check_ranks(self._train.shape[-1])
        trainer = NcrAdapterTrainer(self._logger, finetune_config(self._config), self._adapter_chain())
        adapter_dir = self._store.adapter_dir(self._config.k)
        registry = (
            AdapterRegistry.load(self._logger, adapter_dir)
            if os.path.isdir(adapter_dir)
            else AdapterRegistry(self._logger)
        )
        for d in ranks:
            registry.register(trainer.train(base, d, self._train))
        directory = self._store.save_adapters(self._config.k, registry)
        return True, f"Adapters for d={list(ranks)} written to {directory}"

    @report_status(needs_data=True)
    def sweep(self) -> typing.Tuple[bool, str]:
        """Run the configured scenario and write its CSV"""
        runner = SweepRunner(self._logger, self._config, self._store, self._evaluation)
        path = runner.run()
        return True, f"Wrote {path}"

    @report_status(needs_data=True)
    def dump(self) -> typing.Tuple[bool, str]:
        """Write original, generated and recomposed images for the configured ranks"""
        params, adapters = None, None
        if self._config.scenario == "fig4_fading":
            params = self._store.load_finetuned(self._config.k)
            adapters = self._store.load_adapters(self._config.k)
        runner = SweepRunner(self._logger, self._config, self._store, self._evaluation)
        paths = runner.dump(params, adapters)
        return True, f"Wrote {len(paths)} images to {self._config.out}"

    @report_status
    def verify(self, fast: bool = False) -> typing.Tuple[bool, str]:
        """Run the oracle suite; any failing check is a numerical failure"""
        results = run_oracles(self._logger, self._config.seed, fast)
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise NumericalFailure(f"Oracle checks failed: {', '.join(failed)}")
        return True, f"All {len(results)} oracle checks passed"
