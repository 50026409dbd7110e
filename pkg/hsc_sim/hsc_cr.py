"""Complementary representation (CR) lifecycle and the hybrid link.

The transmitter decodes its own SR with the receiver's (deterministic)
decoder, builds C = [A | AX] from the top-d eigenvectors of the resulting
error matrix and sends C through the digital chain. The receiver recomposes
X_tilde = A^T (AX) + (I - A^T A) X_hat.
"""

import logging
import math
import typing
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ChannelCountMismatch, ConfigError, DimensionMismatch, PayloadLengthError, RankOutOfRange
from .hsc_channel import ChannelLink
from .hsc_codec import SemanticCodec, power_normalize
from .hsc_digital import DigitalChain, FrameHeader, as_fraction
from .hsc_recompose import (
    EigenSpectrum,
    ProjectionBasis,
    as_image,
    average_error_matrix,
    closed_form_mse,
    eig_psd,
    error_matrix,
    optimal_projection,
    orthonormalize_rows,
    recompose,
)

RGB_CHANNELS = 3


@dataclass(frozen=True)
class ComplementaryPayload:
    """C = [A | AX].

    Attributes:
        basis: d x L projection basis A
        projected: AX, (d, L) for grayscale or (3, d, L) for colour
    """

    basis: ProjectionBasis
    projected: np.ndarray

    @property
    def d(self) -> int:
        return self.basis.rank

    @property
    def side_length(self) -> int:
        return self.basis.side_length

    @property
    def channels(self) -> int:
        return 1 if self.projected.ndim == 2 else self.projected.shape[0]

    @property
    def real_count(self) -> int:
        """r = dL for A plus dL per colour channel of AX"""
        return self.d * self.side_length * (1 + self.channels)

    def blocks(self) -> typing.List[np.ndarray]:
        """A, then one AX block per channel, each quantized over its own range."""
        projected = self.projected if self.projected.ndim == 3 else self.projected[None]
        return [self.basis.rows] + [p for p in projected]


@dataclass(frozen=True)
class PayloadReport:
    """Rate accounting of one hybrid transmission.

    eta is exact: (k/R + 2dL) / L^2 for grayscale, (k/R + 4dL) / (3 L^2) for colour.
    """

    k: int
    d: int
    rate: Fraction
    side_length: int
    channels: int
    eta: Fraction

    @property
    def eta_value(self) -> float:
        return float(self.eta)

    @property
    def feasible(self) -> bool:
        return self.eta < 1


def payload_ratio(
    k: int,
    rate: typing.Union[float, Fraction],
    side_length: int,
    d: int,
    channels: int = 1,
) -> PayloadReport:
    rate = as_fraction(rate)
    if rate <= 0:
        raise ConfigError(f"Chain rate must be positive, got {rate}")
    if side_length <= 0:
        raise ConfigError(f"Side length must be positive, got {side_length}")
    if k < 0:
        raise ConfigError(f"SR length must be non-negative, got {k}")
    if d < 0:
        raise RankOutOfRange(f"d = {d} is negative")
    if channels not in (1, RGB_CHANNELS):
        raise ChannelCountMismatch(f"Expected 1 or 3 channels, got {channels}")
    cr_reals = d * side_length * (1 + channels)
    eta = (Fraction(k) / rate + cr_reals) / (channels * side_length * side_length)
    return PayloadReport(k, d, rate, side_length, channels, eta)


def max_feasible_d(k: int, rate: typing.Union[float, Fraction], side_length: int) -> int:
    """Largest d with eta < 1, i.e. d < L/2 - k/(2LR); 0 when no d qualifies."""
    rate = as_fraction(rate)
    if rate <= 0 or side_length <= 0:
        raise ConfigError("Chain rate and side length must be positive")
    bound = Fraction(side_length, 2) - Fraction(k) / (2 * side_length * rate)
    return int(min(max(math.ceil(bound) - 1, 0), side_length))


def _build(
    original: np.ndarray, generated: np.ndarray, d: int, method: str = "lapack"
) -> typing.Tuple[ComplementaryPayload, EigenSpectrum]:
    spectrum = eig_psd(error_matrix(original, generated), method)
    basis = optimal_projection(spectrum, d)
    return ComplementaryPayload(basis, basis.project(as_image(original))), spectrum


def build_cr(
    original: np.ndarray, generated: np.ndarray, d: int, method: str = "lapack"
) -> ComplementaryPayload:
    """C = [A | AX] with A the top-d eigenvectors of error_matrix(X, X_hat)."""
    return _build(original, generated, d, method)[0]


def _check_rgb(image: np.ndarray) -> np.ndarray:
    image = as_image(image)
    if image.ndim != 3 or image.shape[2] != RGB_CHANNELS:
        raise ChannelCountMismatch(f"Expected an L x L x 3 image, got shape {image.shape}")
    return image


def _rgb_build(
    original: np.ndarray, generated: np.ndarray, d: int, method: str = "lapack"
) -> typing.Tuple[ComplementaryPayload, EigenSpectrum]:
    original = _check_rgb(original)
    generated = _check_rgb(generated)
    if original.shape != generated.shape:
        raise DimensionMismatch(f"Shapes {original.shape} and {generated.shape} differ")
    averaged = average_error_matrix(
        [error_matrix(original[..., c], generated[..., c]) for c in range(RGB_CHANNELS)]
    )
    spectrum = eig_psd(averaged, method)
    basis = optimal_projection(spectrum, d)
    projected = np.stack([basis.project(original[..., c]) for c in range(RGB_CHANNELS)])
    return ComplementaryPayload(basis, projected), spectrum


def rgb_build_cr(
    original: np.ndarray, generated: np.ndarray, d: int, method: str = "lapack"
) -> ComplementaryPayload:
    """One basis from the channel-averaged error matrix, AX per colour channel."""
    return _rgb_build(original, generated, d, method)[0]


def serialize_cr(payload: ComplementaryPayload) -> np.ndarray:
    """Row-major A rows, then row-major AX rows (channel by channel)."""
    return np.concatenate([block.reshape(-1) for block in payload.blocks()])


def unpack_cr(
    block: np.ndarray, d: int, side_length: int, channels: int = 1
) -> ComplementaryPayload:
    """Inverse of serialize_cr; received A rows are re-orthonormalized."""
    block = np.asarray(block, dtype=np.float64).reshape(-1)
    expected = d * side_length * (1 + channels)
    if block.size != expected:
        raise PayloadLengthError(f"Expected {expected} reals for d={d}, L={side_length}, got {block.size}")
    if not 0 <= d <= side_length:
        raise RankOutOfRange(f"d = {d} is outside [0, {side_length}]")
    size = d * side_length
    rows = orthonormalize_rows(block[:size].reshape(d, side_length))
    projected = block[size:].reshape(channels, d, side_length)
    if channels == 1:
        projected = projected[0]
    return ComplementaryPayload(ProjectionBasis(rows), projected.copy())


def recompose_payload(payload: ComplementaryPayload, generated: np.ndarray) -> np.ndarray:
    """Range-null recomposition for grayscale or per colour channel."""
    generated = as_image(generated)
    if payload.channels == 1:
        return recompose(payload.basis, payload.projected, generated)
    if generated.ndim != 3 or generated.shape[2] != payload.channels:
        raise ChannelCountMismatch("Generated image does not match the payload's channels")
    return np.stack(
        [
            recompose(payload.basis, payload.projected[c], generated[..., c])
            for c in range(payload.channels)
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class HybridFrame:
    """Everything the transmitter emits for one image.

    Attributes:
        sr_symbols: power-normalized SR, (k,) or (3, k) for colour
        payload: the CR before the digital chain
        cr_symbols: chain output, None when the CR is delivered exactly
        header: CR frame header, None when the CR is delivered exactly
        mirror: X_hat as the transmitter's copy of the decoder sees it
        spectrum: eigen decomposition the basis was taken from
    """

    sr_symbols: np.ndarray
    payload: ComplementaryPayload
    cr_symbols: typing.Optional[np.ndarray]
    header: typing.Optional[FrameHeader]
    mirror: np.ndarray
    spectrum: EigenSpectrum

    @property
    def d(self) -> int:
        return self.payload.d

    def closed_form_mse(self) -> float:
        """Per-pixel error the recomposition reaches when X_hat and C arrive intact."""
        return closed_form_mse(self.spectrum, self.d) * self.payload.channels / self.mirror.size


@dataclass(frozen=True)
class HybridResult:
    generated: np.ndarray
    recomposed: np.ndarray


class HybridTransmitter:
    """Alice: semantic encoder plus the CR builder with its mirror decoder.

    adapters, when given, is an adapter pair whose adapt_latent() rewrites
    z_bar before power normalization and whose adapt_image() post-processes
    the generated image.
    """

    def __init__(
        self,
        logger: logging.Logger,
        codec: SemanticCodec,
        chain: typing.Optional[DigitalChain] = None,
        adapters=None,
        eig_method: str = "lapack",
    ):
        self._logger = logger
        self._codec = codec
        self._chain = chain
        self._adapters = adapters
        self._eig_method = eig_method

    @property
    def codec(self) -> SemanticCodec:
        return self._codec

    def semantic(
        self, image: np.ndarray, rng: typing.Optional[np.random.Generator] = None
    ) -> typing.Tuple[np.ndarray, np.ndarray]:
        """SR symbols and the mirror-decoded X_hat for one image.

        Colour images are coded plane by plane. rng switches on stochastic
        encoding; the mirror always decodes the noiseless SR.
        """
        image = as_image(image)
        planes = image[None] if image.ndim == 2 else np.moveaxis(image, -1, 0)
        latent = self._codec.latent(planes, rng)
        if self._adapters is not None:
            latent = self._adapters.adapt_latent(latent)
        symbols = power_normalize(latent, self._codec.power)
        generated = self._codec.decode(symbols)
        if self._adapters is not None:
            generated = self._adapters.adapt_image(generated)
        if image.ndim == 2:
            return symbols[0], generated[0]
        return symbols, np.moveaxis(generated, 0, -1)

    def complement(
        self, image: np.ndarray, mirror: np.ndarray, d: int
    ) -> typing.Tuple[ComplementaryPayload, EigenSpectrum, typing.Optional[np.ndarray], typing.Optional[FrameHeader]]:
        image = as_image(image)
        if image.ndim == 2:
            payload, spectrum = _build(image, mirror, d, self._eig_method)
        else:
            payload, spectrum = _rgb_build(image, mirror, d, self._eig_method)
        if self._chain is None:
            return payload, spectrum, None, None
        symbols, header = self._chain.transmit(payload.blocks(), d, payload.side_length)
        return payload, spectrum, symbols, header

    def transmit(
        self, image: np.ndarray, d: int, rng: typing.Optional[np.random.Generator] = None
    ) -> HybridFrame:
        symbols, mirror = self.semantic(image, rng)
        payload, spectrum, cr_symbols, header = self.complement(image, mirror, d)
        self._logger.debug(
            "Frame: %d SR symbols, d=%d, %d CR symbols",
            symbols.size,
            d,
            0 if cr_symbols is None else cr_symbols.size,
        )
        return HybridFrame(symbols, payload, cr_symbols, header, mirror, spectrum)


class HybridReceiver:
    """Bob: semantic decoder, CR unpacking and range-null recomposition."""

    def __init__(
        self,
        logger: logging.Logger,
        codec: SemanticCodec,
        chain: typing.Optional[DigitalChain] = None,
        adapters=None,
    ):
        self._logger = logger
        self._codec = codec
        self._chain = chain
        self._adapters = adapters

    def semantic(
        self, sr_symbols: np.ndarray, link: typing.Optional[ChannelLink] = None
    ) -> np.ndarray:
        """X_hat from the SR; colour SRs are (3, k) and come back L x L x 3."""
        symbols = np.atleast_2d(sr_symbols)
        if link is not None:
            symbols = np.stack([link.send(row)[0] for row in symbols])
        generated = self._codec.decode(symbols)
        if self._adapters is not None:
            generated = self._adapters.adapt_image(generated)
        if np.ndim(sr_symbols) == 1:
            return generated[0]
        return np.moveaxis(generated, 0, -1)

    def complement(
        self, frame: HybridFrame, link: typing.Optional[ChannelLink] = None
    ) -> ComplementaryPayload:
        """Recover [A | AX]; without a chain the CR arrives exactly."""
        payload = frame.payload
        if frame.cr_symbols is None or frame.header is None:
            return unpack_cr(serialize_cr(payload), payload.d, payload.side_length, payload.channels)
        if self._chain is None:
            raise ConfigError("Frame carries chain symbols but the receiver has no digital chain")
        received = frame.cr_symbols
        if link is not None and received.size:
            received, _ = link.send(received)
        blocks = self._chain.receive(received, frame.header)
        block = np.concatenate(blocks) if blocks else np.zeros(0)
        return unpack_cr(block, frame.header.d, frame.header.side_length, payload.channels)

    def receive(
        self,
        frame: HybridFrame,
        sr_link: typing.Optional[ChannelLink] = None,
        cr_link: typing.Optional[ChannelLink] = None,
    ) -> HybridResult:
        generated = self.semantic(frame.sr_symbols, sr_link)
        payload = self.complement(frame, cr_link)
        return HybridResult(generated, recompose_payload(payload, generated))
