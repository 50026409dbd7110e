"""Neural semantic transceiver.

An MLP encoder maps a flattened L x L image onto k complex channel symbols.
The VAE variant emits a mean and a log-variance head and samples
z_bar = z_mu + eps * z_sigma; the VQ-VAE variant snaps the mean onto the
nearest entry of a trainable codebook. Either way the symbols are power
normalized to z = sqrt(kP) z_bar / ||z_bar|| before they hit the channel, and
an MLP decoder with a sigmoid output turns the received symbols back into an
image.

Complex vectors cross the network boundary as 2k reals interleaved as
(re, im) pairs.
"""

import logging
import typing
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyCodebook,
    EmptyInput,
    TrainingDiverged,
    ZeroVectorError,
)
from .hsc_channel import ChannelLink
from .mlp import Adam, Mlp

VARIANTS = ("vae", "vqvae")
LOGVAR_LIMIT = 30.0


def to_complex(reals: np.ndarray) -> np.ndarray:
    """(..., 2k) interleaved reals -> (..., k) complex"""
    if reals.shape[-1] % 2:
        raise DimensionMismatch("Interleaved real vector must have even length")
    return reals[..., 0::2] + 1j * reals[..., 1::2]


def to_reals(symbols: np.ndarray) -> np.ndarray:
    """(..., k) complex -> (..., 2k) interleaved reals"""
    reals = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],))
    reals[..., 0::2] = symbols.real
    reals[..., 1::2] = symbols.imag
    return reals


@dataclass(frozen=True)
class CodecArchitecture:
    """Layer widths of the semantic transceiver.

    The decoder mirrors the encoder trunk: 2k -> reversed(hidden_sizes) -> input_size.
    """

    input_size: int = 784
    hidden_sizes: typing.Tuple[int, ...] = (2048, 1024, 512)
    k: int = 128

    @property
    def side_length(self) -> int:
        side = int(round(np.sqrt(self.input_size)))
        if side * side != self.input_size:
            raise DimensionMismatch(f"Input size {self.input_size} is not a square image")
        return side


@dataclass(frozen=True)
class EncoderOutput:
    """The two parallel encoder heads as complex vectors (z_mu, z_sigma)."""

    mean: np.ndarray
    scale: np.ndarray


@dataclass(frozen=True)
class SemanticSignal:
    """Power-normalized channel input symbols."""

    symbols: np.ndarray

    @property
    def k(self) -> int:
        return self.symbols.shape[-1]

    @property
    def average_power(self) -> float:
        return float(np.sum(np.abs(self.symbols) ** 2) / self.k)


@dataclass
class CodecParameters:
    """Weights of one semantic transceiver.

    Attributes:
        trunk: shared encoder layers, input_size -> hidden_sizes (ReLU)
        mean_head: last hidden -> 2k reals (linear)
        scale_head: last hidden -> 2k log-variance reals (linear), None for VQ-VAE
        decoder: 2k -> reversed hidden -> input_size (ReLU, sigmoid output)
        codebook: (entries, 2k) interleaved reals, VQ-VAE only
    """

    trunk: Mlp
    mean_head: Mlp
    scale_head: typing.Optional[Mlp]
    decoder: Mlp
    codebook: typing.Optional[np.ndarray] = None

    def __post_init__(self):
        self.validate()

    @classmethod
    def initialize(
        cls,
        architecture: CodecArchitecture,
        rng: np.random.Generator,
        variant: str = "vae",
        codebook_size: int = 256,
    ) -> "CodecParameters":
        if variant not in VARIANTS:
            raise ValueError(f"Unknown codec variant {variant}, expected one of {VARIANTS}")
        hidden = list(architecture.hidden_sizes)
        width = 2 * architecture.k
        trunk = Mlp.initialize(
            [architecture.input_size] + hidden, ["relu"] * len(hidden), rng
        )
        mean_head = Mlp.initialize([hidden[-1], width], ["linear"], rng)
        scale_head = None
        codebook = None
        if variant == "vae":
            scale_head = Mlp.initialize([hidden[-1], width], ["linear"], rng)
        else:
            codebook = rng.standard_normal((codebook_size, width))
        decoder_sizes = [width] + hidden[::-1] + [architecture.input_size]
        decoder = Mlp.initialize(
            decoder_sizes, ["relu"] * len(hidden) + ["sigmoid"], rng
        )
        return cls(trunk, mean_head, scale_head, decoder, codebook)

    @property
    def variant(self) -> str:
        return "vae" if self.scale_head is not None else "vqvae"

    @property
    def k(self) -> int:
        return self.mean_head.output_size // 2

    @property
    def input_size(self) -> int:
        return self.trunk.input_size

    @property
    def side_length(self) -> int:
        return CodecArchitecture(self.input_size, (), self.k).side_length

    @property
    def architecture(self) -> CodecArchitecture:
        return CodecArchitecture(
            self.input_size, tuple(self.trunk.sizes[1:]), self.k
        )

    def codebook_symbols(self) -> np.ndarray:
        if self.codebook is None:
            raise EmptyCodebook("VAE parameters carry no codebook")
        return to_complex(self.codebook)

    def validate(self):
        width = self.mean_head.output_size
        if width % 2:
            raise DimensionMismatch("Encoder heads must emit an even number of reals")
        if self.mean_head.input_size != self.trunk.output_size:
            raise DimensionMismatch("Mean head does not attach to the encoder trunk")
        if self.scale_head is not None and (
            self.scale_head.input_size != self.trunk.output_size
            or self.scale_head.output_size != width
        ):
            raise DimensionMismatch("Scale head does not match the mean head")
        if self.decoder.input_size != width:
            raise DimensionMismatch("Decoder input does not match the SR width")
        if self.decoder.output_size != self.trunk.input_size:
            raise DimensionMismatch("Decoder output does not match the image size")
        if self.codebook is not None and (
            self.codebook.ndim != 2 or self.codebook.shape[1] != width
        ):
            raise DimensionMismatch("Codebook entries do not match the SR width")

    def networks(self) -> typing.Dict[str, Mlp]:
        nets = {"trunk": self.trunk, "mean_head": self.mean_head}
        if self.scale_head is not None:
            nets["scale_head"] = self.scale_head
        nets["decoder"] = self.decoder
        return nets

    def parameters(self) -> typing.List[np.ndarray]:
        """Trainable arrays in a fixed order (networks, then codebook)."""
        params = []
        for net in self.networks().values():
            params.extend(net.parameters())
        if self.codebook is not None:
            params.append(self.codebook)
        return params

    def copy(self) -> "CodecParameters":
        return CodecParameters(
            self.trunk.copy(),
            self.mean_head.copy(),
            None if self.scale_head is None else self.scale_head.copy(),
            self.decoder.copy(),
            None if self.codebook is None else self.codebook.copy(),
        )


def reparameterize(out: EncoderOutput, eps: np.ndarray) -> np.ndarray:
    """z_bar = z_mu + eps * z_sigma (complex product)."""
    if np.shape(out.mean) != np.shape(out.scale):
        raise DimensionMismatch("Mean and scale have different shapes")
    eps = np.asarray(eps, dtype=np.complex128)
    if eps.ndim and eps.shape[-1] not in (1, out.mean.shape[-1]):
        raise DimensionMismatch("Epsilon does not match the number of symbols")
    return out.mean + eps * out.scale


def sample_epsilon(
    shape: typing.Tuple[int, ...], rng: np.random.Generator, shared: bool = False
) -> np.ndarray:
    """Standard complex Gaussian CN(0, 1) draws.

    shared=True draws a single eps per vector (the last axis has length 1)
    and lets broadcasting apply it to all k symbols.
    """
    if shared:
        shape = tuple(shape[:-1]) + (1,)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def power_normalize(raw: np.ndarray, power: float = 1.0) -> np.ndarray:
    """z = sqrt(kP) z_bar / ||z_bar||, row-wise for batches."""
    raw = np.asarray(raw, dtype=np.complex128)
    k = raw.shape[-1]
    norms = np.sqrt(np.sum(np.abs(raw) ** 2, axis=-1, keepdims=True))
    if np.any(norms == 0.0):
        raise ZeroVectorError()
    return np.sqrt(k * power) * raw / norms


def power_normalize_backward(
    raw: np.ndarray, power: float, grad: np.ndarray
) -> np.ndarray:
    """dLoss/dz_bar given dLoss/dz, both as complex (re + j im) gradients."""
    k = raw.shape[-1]
    norms = np.sqrt(np.sum(np.abs(raw) ** 2, axis=-1, keepdims=True))
    unit = raw / norms
    radial = np.real(np.sum(np.conj(unit) * grad, axis=-1, keepdims=True))
    return np.sqrt(k * power) / norms * (grad - radial * unit)


def vq_quantize(
    raw: np.ndarray, codebook: np.ndarray
) -> typing.Tuple[int, np.ndarray]:
    """Nearest codeword by Euclidean distance; ties go to the lowest index."""
    codebook = np.asarray(codebook)
    if codebook.shape[0] == 0:
        raise EmptyCodebook()
    if codebook.shape[-1] != np.shape(raw)[-1]:
        raise DimensionMismatch("Codeword length does not match the SR length")
    distances = np.sum(np.abs(codebook - raw) ** 2, axis=-1)
    index = int(np.argmin(distances))
    return index, codebook[index].copy()


def _nearest_codewords(raw: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Batched vq_quantize indices for raw of shape (N, k)."""
    if codebook.shape[0] == 0:
        raise EmptyCodebook()
    distances = np.sum(np.abs(raw[:, None, :] - codebook[None, :, :]) ** 2, axis=-1)
    return np.argmin(distances, axis=1)


def gaussian_kl(mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """KL(N(m, s^2) || N(0, 1)) = 0.5 (m^2 + s^2 - 1 - ln s^2), element-wise."""
    variance = np.square(std)
    return 0.5 * (np.square(mean) + variance - 1.0 - np.log(variance))


def complex_gaussian_kl(mean: np.ndarray, variance: np.ndarray) -> np.ndarray:
    """KL(CN(m, v) || CN(0, 1)) = |m|^2 + v - 1 - ln v per complex dimension.

    Equals the sum of gaussian_kl over the real and imaginary parts, each with
    mean sqrt(2) m and variance v measured against the unit prior.
    """
    return np.abs(mean) ** 2 + variance - 1.0 - np.log(variance)


def flatten_images(images: typing.Union[np.ndarray, typing.Sequence[np.ndarray]]) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    return images.reshape(images.shape[0], -1)


class SemanticCodec:
    """Inference side of a trained semantic transceiver."""

    def __init__(
        self, logger: logging.Logger, params: CodecParameters, power: float = 1.0
    ):
        self._logger = logger
        self._params = params
        self._power = power

    @property
    def params(self) -> CodecParameters:
        return self._params

    @property
    def k(self) -> int:
        return self._params.k

    @property
    def power(self) -> float:
        return self._power

    def encode(self, image: np.ndarray) -> EncoderOutput:
        """Both encoder heads for one image (k,) or a batch (N, k)."""
        single = np.ndim(image) == 2
        x = flatten_images(image)
        if x.shape[1] != self._params.input_size:
            raise DimensionMismatch(
                f"Image has {x.shape[1]} pixels, encoder expects {self._params.input_size}"
            )
        hidden = self._params.trunk(x)
        mean = to_complex(self._params.mean_head(hidden))
        if self._params.scale_head is not None:
            logvar = np.clip(self._params.scale_head(hidden), -LOGVAR_LIMIT, LOGVAR_LIMIT)
            scale = to_complex(np.exp(0.5 * logvar))
        else:
            scale = np.zeros_like(mean)
        if single:
            return EncoderOutput(mean[0], scale[0])
        return EncoderOutput(mean, scale)

    def latent(
        self,
        image: np.ndarray,
        rng: typing.Optional[np.random.Generator] = None,
        shared_epsilon: bool = False,
    ) -> np.ndarray:
        """z_bar before power normalization.

        Without a generator the path is deterministic (eps = 0), which is what
        the transmitter's mirror decoder and the receiver both use.
        """
        out = self.encode(image)
        if self._params.variant == "vqvae":
            book = self._params.codebook_symbols()
            if out.mean.ndim == 1:
                return vq_quantize(out.mean, book)[1]
            return book[_nearest_codewords(out.mean, book)]
        if rng is None:
            return out.mean
        return reparameterize(out, sample_epsilon(out.mean.shape, rng, shared_epsilon))

    def transmit_symbols(
        self,
        image: np.ndarray,
        rng: typing.Optional[np.random.Generator] = None,
        shared_epsilon: bool = False,
    ) -> SemanticSignal:
        return SemanticSignal(power_normalize(self.latent(image, rng, shared_epsilon), self._power))

    def decode(self, received: np.ndarray) -> np.ndarray:
        """Generated image(s) X_hat from received symbols (k,) or (N, k)."""
        received = np.asarray(received, dtype=np.complex128)
        if received.shape[-1] != self.k:
            raise DimensionMismatch(
                f"Received {received.shape[-1]} symbols, decoder expects {self.k}"
            )
        pixels = self._params.decoder(to_reals(np.atleast_2d(received)))
        side = self._params.side_length
        images = pixels.reshape(-1, side, side)
        return images[0] if received.ndim == 1 else images

    def reconstruct(
        self,
        images: np.ndarray,
        link: typing.Optional[ChannelLink] = None,
    ) -> np.ndarray:
        """Deterministic encode -> normalize -> link -> decode for a batch."""
        x = np.asarray(images, dtype=np.float64)
        single = x.ndim == 2
        z = self.transmit_symbols(x if not single else x[None]).symbols
        if link is not None:
            z, _ = link.send_batch(z)
        out = self.decode(z)
        return out[0] if single else out

    def evaluate_mse(
        self,
        images: np.ndarray,
        link: typing.Optional[ChannelLink] = None,
    ) -> float:
        """Per-pixel MSE of generated images over a batch."""
        images = np.asarray(images, dtype=np.float64)
        generated = self.reconstruct(images, link)
        return float(np.mean((generated - images) ** 2))


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for codec training and fine-tuning."""

    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    kl_weight: float = 1e-3
    commitment_weight: float = 0.25
    power: float = 1.0
    seed: int = 0
    shared_epsilon: bool = False
    codebook_size: int = 256


@dataclass
class _StepResult:
    loss: float
    reconstruction: float
    grads: typing.List[np.ndarray]
    codeword_indices: typing.Optional[np.ndarray] = None
    quantization_error: float = 0.0


def _complex_mul_backward(gain: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. x of y = gain * x, in the (re + j im) convention."""
    return np.conj(gain) * grad


def vae_step(
    params: CodecParameters,
    x: np.ndarray,
    eps: np.ndarray,
    power: float = 1.0,
    kl_weight: float = 1e-3,
    link: typing.Optional[ChannelLink] = None,
) -> _StepResult:
    """Loss and gradients of per-pixel MSE + kl_weight * KL for one batch.

    KL is averaged over the batch and the k complex dimensions.
    """
    n, k = x.shape[0], params.k
    hidden, trunk_cache = params.trunk.forward(x)
    mean_reals, mean_cache = params.mean_head.forward(hidden)
    logvar_raw, scale_cache = params.scale_head.forward(hidden)
    logvar = np.clip(logvar_raw, -LOGVAR_LIMIT, LOGVAR_LIMIT)
    sigma_reals = np.exp(0.5 * logvar)

    mean = to_complex(mean_reals)
    sigma = to_complex(sigma_reals)
    raw = mean + eps * sigma
    z = power_normalize(raw, power)
    if link is not None:
        received, gains = link.send_batch(z)
    else:
        received, gains = z, np.ones(n, dtype=np.complex128)
    x_hat, decoder_cache = params.decoder.forward(to_reals(received))

    residual = x_hat - x
    reconstruction = float(np.mean(residual**2))
    variance = np.exp(logvar[:, 0::2]) + np.exp(logvar[:, 1::2])
    kl = float(np.mean(complex_gaussian_kl(mean, variance)))
    loss = reconstruction + kl_weight * kl

    decoder_grads, grad_received = params.decoder.backward(
        decoder_cache, 2.0 * residual / residual.size
    )
    grad_z = _complex_mul_backward(gains[:, None], to_complex(grad_received))
    grad_raw = power_normalize_backward(raw, power, grad_z)

    kl_scale = kl_weight / (n * k)
    grad_mean = grad_raw + kl_scale * 2.0 * mean
    grad_sigma = _complex_mul_backward(eps, grad_raw)
    grad_logvar = 0.5 * sigma_reals * to_reals(grad_sigma)
    dkl_dvar = kl_scale * (1.0 - 1.0 / variance)
    grad_logvar[:, 0::2] += dkl_dvar * np.exp(logvar[:, 0::2])
    grad_logvar[:, 1::2] += dkl_dvar * np.exp(logvar[:, 1::2])
    grad_logvar *= np.abs(logvar_raw) < LOGVAR_LIMIT

    mean_grads, grad_hidden_mean = params.mean_head.backward(mean_cache, to_reals(grad_mean))
    scale_grads, grad_hidden_scale = params.scale_head.backward(scale_cache, grad_logvar)
    trunk_grads, _ = params.trunk.backward(trunk_cache, grad_hidden_mean + grad_hidden_scale)
    return _StepResult(
        loss=loss,
        reconstruction=reconstruction,
        grads=trunk_grads + mean_grads + scale_grads + decoder_grads,
    )


def vqvae_step(
    params: CodecParameters,
    x: np.ndarray,
    power: float = 1.0,
    commitment_weight: float = 0.25,
    link: typing.Optional[ChannelLink] = None,
) -> _StepResult:
    """Per-pixel MSE + codebook loss + commitment loss with straight-through gradients.

    Codebook loss ||sg(z_e) - u||^2 and commitment ||z_e - sg(u)||^2 are averaged
    over the batch and the k complex dimensions.
    """
    n, k = x.shape[0], params.k
    hidden, trunk_cache = params.trunk.forward(x)
    mean_reals, mean_cache = params.mean_head.forward(hidden)
    encoded = to_complex(mean_reals)
    book = params.codebook_symbols()
    indices = _nearest_codewords(encoded, book)
    quantized = book[indices]

    z = power_normalize(quantized, power)
    if link is not None:
        received, gains = link.send_batch(z)
    else:
        received, gains = z, np.ones(n, dtype=np.complex128)
    x_hat, decoder_cache = params.decoder.forward(to_reals(received))

    residual = x_hat - x
    reconstruction = float(np.mean(residual**2))
    offset = encoded - quantized
    distance = float(np.mean(np.abs(offset) ** 2))
    loss = reconstruction + (1.0 + commitment_weight) * distance

    decoder_grads, grad_received = params.decoder.backward(
        decoder_cache, 2.0 * residual / residual.size
    )
    grad_z = _complex_mul_backward(gains[:, None], to_complex(grad_received))
    grad_quantized = power_normalize_backward(quantized, power, grad_z)

    scale = 2.0 / (n * k)
    # straight-through: the decoder's gradient on u is handed to z_e unchanged
    grad_encoded = grad_quantized + commitment_weight * scale * offset
    grad_book = np.zeros_like(book)
    np.add.at(grad_book, indices, -scale * offset)

    mean_grads, grad_hidden = params.mean_head.backward(mean_cache, to_reals(grad_encoded))
    trunk_grads, _ = params.trunk.backward(trunk_cache, grad_hidden)
    return _StepResult(
        loss=loss,
        reconstruction=reconstruction,
        grads=trunk_grads + mean_grads + decoder_grads + [to_reals(grad_book)],
        codeword_indices=indices,
        quantization_error=float(np.mean(np.sqrt(np.sum(np.abs(offset) ** 2, axis=1)))),
    )


class CodecTrainer:
    """Mini-batch Adam training of a semantic transceiver.

    Attributes:
        history: mean loss of every completed epoch of the last run
        dead_codeword_fraction: share of codewords unused in the last VQ-VAE epoch
    """

    def __init__(self, logger: logging.Logger, config: TrainingConfig):
        self._logger = logger
        self._config = config
        self.history: typing.List[float] = []
        self.dead_codeword_fraction: typing.Optional[float] = None
        self.quantization_history: typing.List[float] = []

    @property
    def config(self) -> TrainingConfig:
        return self._config

    def train_elbo(
        self,
        dataset: typing.Sequence[np.ndarray],
        architecture: typing.Optional[CodecArchitecture] = None,
        params: typing.Optional[CodecParameters] = None,
    ) -> CodecParameters:
        """Train the VAE transceiver over an error-free channel."""
        x = self._check_dataset(dataset)
        rng = np.random.default_rng(self._config.seed)
        if params is None:
            architecture = architecture or CodecArchitecture(input_size=x.shape[1])
            params = CodecParameters.initialize(architecture, rng, "vae")
        return self.fit(params, x, rng=rng)

    def train_vqvae(
        self,
        dataset: typing.Sequence[np.ndarray],
        architecture: typing.Optional[CodecArchitecture] = None,
        params: typing.Optional[CodecParameters] = None,
    ) -> CodecParameters:
        """Train the VQ-VAE transceiver over an error-free channel.

        A fresh codebook is seeded with encoder outputs of random training
        images so that every codeword starts inside the data's range.
        """
        x = self._check_dataset(dataset)
        rng = np.random.default_rng(self._config.seed)
        if params is None:
            architecture = architecture or CodecArchitecture(input_size=x.shape[1])
            params = CodecParameters.initialize(
                architecture, rng, "vqvae", self._config.codebook_size
            )
            picks = rng.integers(0, x.shape[0], size=params.codebook.shape[0])
            encoded = params.mean_head(params.trunk(x[picks]))
            params.codebook[...] = encoded + 0.01 * rng.standard_normal(encoded.shape)
        return self.fit(params, x, rng=rng)

    def fit(
        self,
        params: CodecParameters,
        dataset: typing.Union[np.ndarray, typing.Sequence[np.ndarray]],
        link: typing.Optional[ChannelLink] = None,
        rng: typing.Optional[np.random.Generator] = None,
    ) -> CodecParameters:
        """Continue training a copy of params, optionally through a noisy link."""
        x = self._check_dataset(dataset)
        params = params.copy()
        rng = rng if rng is not None else np.random.default_rng(self._config.seed)
        self.history = []
        self.quantization_history = []
        if self._config.epochs <= 0:
            return params

        optimizer = Adam(params.parameters(), learning_rate=self._config.learning_rate)
        batch_size = max(1, self._config.batch_size)
        for epoch in range(self._config.epochs):
            order = rng.permutation(x.shape[0])
            total = 0.0
            quantization = 0.0
            usage = None
            if params.variant == "vqvae":
                usage = np.zeros(params.codebook.shape[0], dtype=np.int64)
            for start in range(0, x.shape[0], batch_size):
                batch = x[order[start : start + batch_size]]
                step = self._step(params, batch, rng, link)
                if not np.isfinite(step.loss) or not all(
                    np.all(np.isfinite(g)) for g in step.grads
                ):
                    raise TrainingDiverged(
                        f"Loss became {step.loss} in epoch {epoch + 1}, batch {start // batch_size}"
                    )
                optimizer.step(step.grads)
                total += step.loss * batch.shape[0]
                if usage is not None:
                    usage += np.bincount(step.codeword_indices, minlength=usage.size)
                    quantization += step.quantization_error * batch.shape[0]
            self.history.append(total / x.shape[0])
            if usage is not None:
                self.quantization_history.append(quantization / x.shape[0])
                self.dead_codeword_fraction = float(np.mean(usage == 0))
                self._logger.info(
                    "Epoch %d/%d loss %.6f, quantization error %.4f, dead codewords %.1f%%",
                    epoch + 1,
                    self._config.epochs,
                    self.history[-1],
                    self.quantization_history[-1],
                    100.0 * self.dead_codeword_fraction,
                )
            else:
                self._logger.info(
                    "Epoch %d/%d loss %.6f", epoch + 1, self._config.epochs, self.history[-1]
                )
        return params

    def _step(
        self,
        params: CodecParameters,
        batch: np.ndarray,
        rng: np.random.Generator,
        link: typing.Optional[ChannelLink],
    ) -> _StepResult:
        if params.variant == "vqvae":
            return vqvae_step(
                params, batch, self._config.power, self._config.commitment_weight, link
            )
        eps = sample_epsilon((batch.shape[0], params.k), rng, self._config.shared_epsilon)
        return vae_step(
            params, batch, eps, self._config.power, self._config.kl_weight, link
        )

    @staticmethod
    def _check_dataset(dataset) -> np.ndarray:
        if len(dataset) == 0:
            raise EmptyInput("Training dataset is empty")
        return flatten_images(dataset)


def quantization_error(params: CodecParameters, images: np.ndarray) -> float:
    """Mean distance ||z_e - u_i|| between encoder outputs and their codewords."""
    encoded = to_complex(params.mean_head(params.trunk(flatten_images(images))))
    book = params.codebook_symbols()
    nearest = book[_nearest_codewords(encoded, book)]
    return float(np.mean(np.sqrt(np.sum(np.abs(encoded - nearest) ** 2, axis=1))))


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), floor
    )


def grad_check(
    params: CodecParameters,
    image: np.ndarray,
    step: float = 1e-5,
    kl_weight: float = 1.0,
    power: float = 1.0,
    seed: int = 0,
    floor: float = 1e-4,
) -> float:
    """Largest relative gap between backprop and central finite differences.

    Runs the full VAE objective (encoder, reparameterization with a fixed eps,
    power normalization, decoder, KL) on a single image. Intended for small
    networks: every parameter is perturbed.
    """
    if params.variant != "vae":
        raise ValueError("Gradient check needs the VAE variant")
    params = params.copy()
    x = flatten_images(image)
    eps = sample_epsilon((x.shape[0], params.k), np.random.default_rng(seed))
    analytic = vae_step(params, x, eps, power, kl_weight).grads

    worst = 0.0
    for array, grad in zip(params.parameters(), analytic):
        numeric = np.zeros_like(array)
        for index in np.ndindex(array.shape):
            saved = array[index]
            array[index] = saved + step
            plus = vae_step(params, x, eps, power, kl_weight).loss
            array[index] = saved - step
            minus = vae_step(params, x, eps, power, kl_weight).loss
            array[index] = saved
            numeric[index] = (plus - minus) / (2.0 * step)
        if array.size:
            worst = max(worst, float(np.max(_relative_errors(grad, numeric, floor))))
    return worst


def mlp_grad_check(
    mlp: Mlp,
    inputs: np.ndarray,
    targets: np.ndarray,
    step: float = 1e-5,
    floor: float = 1e-4,
) -> typing.Tuple[float, typing.List[np.ndarray]]:
    """Finite-difference check of Mlp.backward on 0.5 ||f(x) - t||^2.

    Returns:
        Largest relative error and the analytic gradients
    """
    mlp = mlp.copy()

    def loss() -> float:
        return 0.5 * float(np.sum((mlp(inputs) - targets) ** 2))

    out, cache = mlp.forward(inputs)
    analytic, _ = mlp.backward(cache, out - targets)
    worst = 0.0
    for array, grad in zip(mlp.parameters(), analytic):
        numeric = np.zeros_like(array)
        for index in np.ndindex(array.shape):
            saved = array[index]
            array[index] = saved + step
            plus = loss()
            array[index] = saved - step
            minus = loss()
            array[index] = saved
            numeric[index] = (plus - minus) / (2.0 * step)
        worst = max(worst, float(np.max(_relative_errors(grad, numeric, floor))))
    return worst, analytic
