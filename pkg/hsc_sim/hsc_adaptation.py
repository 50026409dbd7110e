"""Channel adaptation of a trained transceiver.

Two procedures run on top of a transceiver trained over an error-free link:

* few-shot fine-tuning: encoder and decoder keep training on a small sample
  budget whose SR passes through block-fading channels drawn from an SNR grid;
* NCR adapters: a residual MLP on the encoder output and another on the
  generated image, trained per CR rank d with the transceiver frozen, against
  the error of the recomposed image whose CR went through the noisy chain.
"""

import glob
import logging
import os
import re
import typing
from dataclasses import dataclass

import numpy as np

from .checkpoint import KIND_ADAPTER, Checkpoint, load_checkpoint, save_checkpoint
from .errors import (
    AdapterNotTrained,
    CheckpointError,
    DimensionMismatch,
    EmptyInput,
    MissingCheckpoint,
    TrainingDiverged,
)
from .hsc_channel import ChannelLink, ChannelMode, ChannelStreams
from .hsc_codec import (
    CodecParameters,
    CodecTrainer,
    SemanticCodec,
    TrainingConfig,
    flatten_images,
    power_normalize,
    power_normalize_backward,
    to_complex,
    to_reals,
)
from .hsc_cr import HybridFrame, HybridReceiver, HybridTransmitter
from .hsc_digital import DigitalChain
from .mlp import Adam, Mlp

ADAPTER_FILE_PATTERN = "adapters_d{d}.hscm"


@dataclass(frozen=True)
class FinetuneConfig:
    """Few-shot adaptation settings.

    Attributes:
        snr_min_db, snr_max_db, snr_step_db: SNR grid each image draws from
        mu: average fading gain
        sample_budget: training images used for adaptation
        validation_size: held-out images used to accept or reject the result
        channel: channel mode the adaptation runs under
    """

    snr_min_db: float = 0.0
    snr_max_db: float = 5.0
    snr_step_db: float = 0.5
    mu: float = 1.0
    sample_budget: int = 200
    validation_size: int = 100
    epochs: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 32
    kl_weight: float = 1e-3
    power: float = 1.0
    channel: str = "fading"
    encoder_adapter_hidden: typing.Optional[int] = None
    decoder_adapter_hidden: int = 1024
    seed: int = 0

    @property
    def snr_grid(self) -> np.ndarray:
        count = int(round((self.snr_max_db - self.snr_min_db) / self.snr_step_db)) + 1
        return self.snr_min_db + self.snr_step_db * np.arange(count)

    def links(
        self, seed: typing.Optional[int] = None
    ) -> typing.Tuple[ChannelLink, ChannelLink]:
        """Independent SR and CR links over the SNR grid."""
        streams = ChannelStreams.from_seed(self.seed if seed is None else seed)
        mode = ChannelMode.parse(self.channel)
        sr = ChannelLink(mode, self.snr_grid, streams.sr_fading, streams.sr_noise, self.mu, self.power)
        cr = ChannelLink(mode, self.snr_grid, streams.cr_fading, streams.cr_noise, self.mu, self.power)
        return sr, cr


def _split(
    dataset: typing.Sequence[np.ndarray],
    cfg: FinetuneConfig,
    validation: typing.Optional[typing.Sequence[np.ndarray]],
) -> typing.Tuple[np.ndarray, np.ndarray]:
    images = np.asarray(dataset, dtype=np.float64)
    if images.shape[0] == 0:
        raise EmptyInput("Adaptation dataset is empty")
    train = images[: cfg.sample_budget]
    if validation is not None:
        held_out = np.asarray(validation, dtype=np.float64)
    elif images.shape[0] > cfg.sample_budget:
        held_out = images[cfg.sample_budget : cfg.sample_budget + cfg.validation_size]
    else:
        held_out = train
    return train, held_out


def fading_mse(
    logger: logging.Logger,
    params: CodecParameters,
    images: np.ndarray,
    cfg: FinetuneConfig,
    seed: int,
) -> float:
    """Generated-image MSE over a freshly seeded link, reproducible for a given seed."""
    sr_link, _ = cfg.links(seed)
    return SemanticCodec(logger, params, cfg.power).evaluate_mse(images, sr_link)


def finetune(
    logger: logging.Logger,
    params: CodecParameters,
    cfg: FinetuneConfig,
    dataset: typing.Sequence[np.ndarray],
    validation: typing.Optional[typing.Sequence[np.ndarray]] = None,
) -> CodecParameters:
    """Few-shot fine-tuning of encoder and decoder through sampled channels.

    The result is only accepted when the held-out MSE under the same channel
    model did not get worse; otherwise the input parameters come back.
    """
    train, held_out = _split(dataset, cfg, validation)
    trainer = CodecTrainer(
        logger,
        TrainingConfig(
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            learning_rate=cfg.learning_rate,
            kl_weight=cfg.kl_weight,
            power=cfg.power,
            seed=cfg.seed,
        ),
    )
    validation_seed = cfg.seed + 1
    before = fading_mse(logger, params, held_out, cfg, validation_seed)
    sr_link, _ = cfg.links()
    tuned = trainer.fit(params, train, link=sr_link)
    after = fading_mse(logger, tuned, held_out, cfg, validation_seed)
    logger.info("Fine-tuning %s MSE %.6e -> %.6e", cfg.channel, before, after)
    if after > before:
        logger.warning(
            "Fine-tuning raised held-out MSE from %.6e to %.6e, keeping the original transceiver",
            before,
            after,
        )
        return params.copy()
    return tuned


@dataclass
class AdapterPair:
    """Residual adapters specialised for one CR rank.

    Attributes:
        encoder: 2k reals -> hidden -> 2k reals, added to z_bar
        decoder: L^2 pixels -> hidden -> L^2 pixels, added to X_hat
        d: the CR rank the pair was trained for
    """

    encoder: Mlp
    decoder: Mlp
    d: int

    def __post_init__(self):
        if self.encoder.input_size != self.encoder.output_size:
            raise DimensionMismatch("Encoder adapter must map the SR onto itself")
        if self.decoder.input_size != self.decoder.output_size:
            raise DimensionMismatch("Decoder adapter must map the image onto itself")
        if self.encoder.input_size % 2:
            raise DimensionMismatch("Encoder adapter width must be an even number of reals")

    @classmethod
    def initialize(
        cls,
        k: int,
        pixel_count: int,
        d: int,
        rng: np.random.Generator,
        encoder_hidden: typing.Optional[int] = None,
        decoder_hidden: int = 1024,
    ) -> "AdapterPair":
        """Identity-at-start adapters: the last layer of each is zero."""
        width = 2 * k
        encoder_hidden = encoder_hidden or 2 * width
        encoder = Mlp.initialize([width, encoder_hidden, width], ["relu", "linear"], rng, zero_last=True)
        decoder = Mlp.initialize(
            [pixel_count, decoder_hidden, pixel_count], ["relu", "linear"], rng, zero_last=True
        )
        return cls(encoder, decoder, d)

    @property
    def k(self) -> int:
        return self.encoder.input_size // 2

    def parameters(self) -> typing.List[np.ndarray]:
        return self.encoder.parameters() + self.decoder.parameters()

    def copy(self) -> "AdapterPair":
        return AdapterPair(self.encoder.copy(), self.decoder.copy(), self.d)

    def adapt_latent(self, latent: np.ndarray) -> np.ndarray:
        """z_bar + psi(z_bar) for (k,) or (N, k) complex latents."""
        latent = np.asarray(latent, dtype=np.complex128)
        if latent.shape[-1] != self.k:
            raise DimensionMismatch(f"Adapter expects k={self.k}, got {latent.shape[-1]}")
        batch = np.atleast_2d(latent)
        adapted = batch + to_complex(self.encoder(to_reals(batch)))
        return adapted[0] if latent.ndim == 1 else adapted

    def adapt_image(self, images: np.ndarray) -> np.ndarray:
        """X_hat + omega(X_hat) for (L, L) or (N, L, L) images."""
        images = np.asarray(images, dtype=np.float64)
        flat = flatten_images(images)
        if flat.shape[1] != self.decoder.input_size:
            raise DimensionMismatch(
                f"Adapter expects {self.decoder.input_size} pixels, got {flat.shape[1]}"
            )
        adapted = (flat + self.decoder(flat)).reshape((-1,) + images.shape[-2:])
        return adapted[0] if images.ndim == 2 else adapted


def apply_adapters(
    encoder_out: np.ndarray, decoder_out: np.ndarray, adapters: AdapterPair
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Adapted SR latent and adapted generated image."""
    return adapters.adapt_latent(encoder_out), adapters.adapt_image(decoder_out)


class NcrAdapterTrainer:
    """Trains one adapter pair per CR rank around a frozen transceiver."""

    def __init__(
        self,
        logger: logging.Logger,
        cfg: FinetuneConfig,
        chain: typing.Optional[DigitalChain] = None,
    ):
        self._logger = logger
        self._cfg = cfg
        self._chain = chain
        self.history: typing.List[float] = []

    def train(
        self,
        base: typing.Optional[CodecParameters],
        d: int,
        dataset: typing.Sequence[np.ndarray],
        adapters: typing.Optional[AdapterPair] = None,
    ) -> AdapterPair:
        if base is None:
            raise MissingCheckpoint("Adapter training needs a trained transceiver")
        cfg = self._cfg
        train, _ = _split(dataset, cfg, None)
        side = int(train.shape[-1])
        if not 0 <= d <= side:
            raise DimensionMismatch(f"d = {d} is outside [0, {side}]")
        rng = np.random.default_rng(cfg.seed)
        if adapters is None:
            adapters = AdapterPair.initialize(
                base.k,
                base.input_size,
                d,
                rng,
                cfg.encoder_adapter_hidden,
                cfg.decoder_adapter_hidden,
            )
        else:
            adapters = adapters.copy()
        self.history = []
        if cfg.epochs <= 0:
            return adapters

        codec = SemanticCodec(self._logger, base, cfg.power)
        transmitter = HybridTransmitter(self._logger, codec, self._chain)
        receiver = HybridReceiver(self._logger, codec, self._chain)
        sr_link, cr_link = cfg.links()
        optimizer = Adam(adapters.parameters(), learning_rate=cfg.learning_rate)
        for epoch in range(cfg.epochs):
            order = rng.permutation(train.shape[0])
            total = 0.0
            for start in range(0, train.shape[0], cfg.batch_size):
                batch = train[order[start : start + cfg.batch_size]]
                loss, grads = self._step(
                    base, adapters, transmitter, receiver, batch, d, sr_link, cr_link
                )
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"Adapter loss became {loss} in epoch {epoch + 1} for d={d}"
                    )
                optimizer.step(grads)
                total += loss * batch.shape[0]
            self.history.append(total / train.shape[0])
            self._logger.info(
                "Adapters d=%d epoch %d/%d loss %.6e", d, epoch + 1, cfg.epochs, self.history[-1]
            )
        return adapters

    def _step(
        self,
        base: CodecParameters,
        adapters: AdapterPair,
        transmitter: HybridTransmitter,
        receiver: HybridReceiver,
        batch: np.ndarray,
        d: int,
        sr_link: ChannelLink,
        cr_link: ChannelLink,
    ) -> typing.Tuple[float, typing.List[np.ndarray]]:
        """Loss on X_tilde and gradients for the adapter parameters only.

        A and the received CR are built from the adapted mirror and then held
        constant for the gradient.
        """
        power = self._cfg.power
        latent = transmitter.codec.latent(batch)
        symbols = power_normalize(adapters.adapt_latent(latent), power)

        side = batch.shape[-1]
        range_parts = np.empty_like(batch)
        null_projectors = np.empty((batch.shape[0], side, side))
        for i, image in enumerate(batch):
            mirror = adapters.adapt_image(transmitter.codec.decode(symbols[i]))
            payload, spectrum, cr_symbols, header = transmitter.complement(image, mirror, d)
            frame = HybridFrame(symbols[i], payload, cr_symbols, header, mirror, spectrum)
            delivered = receiver.complement(frame, cr_link)
            rows = delivered.basis.rows
            range_parts[i] = rows.T @ delivered.projected
            null_projectors[i] = np.eye(side) - rows.T @ rows

        return recomposition_loss(
            base, adapters, latent, batch, range_parts, null_projectors, sr_link, power
        )


def recomposition_loss(
    base: CodecParameters,
    adapters: AdapterPair,
    latent: np.ndarray,
    batch: np.ndarray,
    range_parts: np.ndarray,
    null_projectors: np.ndarray,
    sr_link: ChannelLink,
    power: float = 1.0,
) -> typing.Tuple[float, typing.List[np.ndarray]]:
    """Mean squared error of A^T(AX) + (I - A^T A) X_hat against the batch.

    Args:
        latent: (N, k) encoder output of the frozen transceiver
        batch: (N, L, L) original images
        range_parts: (N, L, L) constant A^T(AX) as delivered
        null_projectors: (N, L, L) constant I - A^T A
        sr_link: link the adapted SR crosses
    Returns:
        Loss and gradients for the encoder then decoder adapter parameters
    """
    adapter_out, encoder_cache = adapters.encoder.forward(to_reals(latent))
    raw = latent + to_complex(adapter_out)
    symbols = power_normalize(raw, power)

    received, gains = sr_link.send_batch(symbols)
    base_out, decoder_cache = base.decoder.forward(to_reals(received))
    correction, adapter_cache = adapters.decoder.forward(base_out)
    generated = (base_out + correction).reshape(batch.shape)

    residual = range_parts + null_projectors @ generated - batch
    loss = float(np.mean(residual**2))
    grad_recomposed = 2.0 * residual / residual.size
    grad_generated = (np.swapaxes(null_projectors, 1, 2) @ grad_recomposed).reshape(
        batch.shape[0], -1
    )

    decoder_adapter_grads, grad_base_from_adapter = adapters.decoder.backward(
        adapter_cache, grad_generated
    )
    _, grad_received = base.decoder.backward(
        decoder_cache, grad_generated + grad_base_from_adapter
    )
    grad_symbols = np.conj(gains)[:, None] * to_complex(grad_received)
    grad_raw = power_normalize_backward(raw, power, grad_symbols)
    encoder_adapter_grads, _ = adapters.encoder.backward(encoder_cache, to_reals(grad_raw))
    return loss, encoder_adapter_grads + decoder_adapter_grads


def adapter_checkpoint(pair: AdapterPair) -> Checkpoint:
    return Checkpoint(
        KIND_ADAPTER,
        pair.k,
        {"encoder_adapter": pair.encoder, "decoder_adapter": pair.decoder},
        d_tag=pair.d,
    )


def adapter_from_checkpoint(checkpoint: Checkpoint) -> AdapterPair:
    if checkpoint.kind != KIND_ADAPTER or checkpoint.d_tag is None:
        raise CheckpointError("Checkpoint does not hold a d-tagged adapter pair")
    try:
        return AdapterPair(
            checkpoint.networks["encoder_adapter"],
            checkpoint.networks["decoder_adapter"],
            checkpoint.d_tag,
        )
    except KeyError as e:
        raise CheckpointError(f"Adapter checkpoint lacks network {e}")
    except DimensionMismatch as e:
        raise CheckpointError(f"Broken adapter shape chain: {e}")


class AdapterRegistry:
    """One adapter pair per trained CR rank d."""

    def __init__(self, logger: logging.Logger):
        self._logger = logger
        self._pairs: typing.Dict[int, AdapterPair] = {}

    def register(self, pair: AdapterPair):
        if pair.d in self._pairs:
            self._logger.info("Replacing adapter pair for d=%d", pair.d)
        self._pairs[pair.d] = pair

    def get(self, d: int) -> AdapterPair:
        if d not in self._pairs:
            raise AdapterNotTrained(
                f"No adapter pair trained for d={d}, trained ranks: {self.trained_ranks()}"
            )
        return self._pairs[d]

    def __contains__(self, d: int) -> bool:
        return d in self._pairs

    def __len__(self) -> int:
        return len(self._pairs)

    def trained_ranks(self) -> typing.List[int]:
        return sorted(self._pairs)

    def save(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        for d, pair in sorted(self._pairs.items()):
            save_checkpoint(
                os.path.join(directory, ADAPTER_FILE_PATTERN.format(d=d)), adapter_checkpoint(pair)
            )

    @classmethod
    def load(cls, logger: logging.Logger, directory: str) -> "AdapterRegistry":
        registry = cls(logger)
        for path in sorted(glob.glob(os.path.join(directory, ADAPTER_FILE_PATTERN.format(d="*")))):
            match = re.search(r"adapters_d(\d+)\.hscm$", path)
            if match is None:
                continue
            pair = adapter_from_checkpoint(load_checkpoint(path))
            if pair.d != int(match.group(1)):
                raise CheckpointError(f"{path} is tagged d={pair.d}")
            registry.register(pair)
        return registry
