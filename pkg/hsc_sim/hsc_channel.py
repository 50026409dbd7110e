import enum
import typing
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ZeroFadingCoefficient


class ChannelMode(enum.Enum):
    """How a link perturbs the symbols it carries"""

    ERROR_FREE = "error_free"
    AWGN = "awgn"
    FADING = "fading"

    @classmethod
    def parse(cls, name: str) -> "ChannelMode":
        try:
            return cls(name)
        except ValueError:
            raise ConfigError(
                f"Unknown channel mode {name}, expected one of {[m.value for m in cls]}"
            )


@dataclass(frozen=True)
class ChannelRealization:
    """State of a slow-fading link for one transmitted image.

    Attributes:
        h: complex fading coefficient, constant over the block
        sigma2: complex noise power
        power: transmit power P
        mu: average channel gain E|h|^2
        error_free: symbols pass through untouched
        literal_power: multiply the already normalized symbols by sqrt(P) again
    """

    h: complex
    sigma2: float
    power: float = 1.0
    mu: float = 1.0
    error_free: bool = False
    literal_power: bool = False

    def __post_init__(self):
        if self.sigma2 < 0.0:
            raise ConfigError(f"Noise power must be non-negative, got {self.sigma2}")
        if self.power <= 0.0:
            raise ConfigError(f"Transmit power must be positive, got {self.power}")
        if self.mu <= 0.0:
            raise ConfigError(f"Average channel gain must be positive, got {self.mu}")
        if not np.isfinite(self.h):
            raise ConfigError("Fading coefficient must be finite")

    @classmethod
    def ideal(cls, power: float = 1.0) -> "ChannelRealization":
        return cls(h=1.0 + 0.0j, sigma2=0.0, power=power, error_free=True)

    @property
    def amplitude(self) -> complex:
        """Complex gain applied to each transmitted symbol"""
        if self.literal_power:
            return self.h * np.sqrt(self.power)
        return self.h


def sample_fading(mu: float, rng: np.random.Generator) -> complex:
    """h ~ CN(0, mu): real and imaginary parts each N(0, mu / 2)."""
    if mu <= 0.0:
        raise ConfigError(f"Average channel gain must be positive, got {mu}")
    scale = np.sqrt(mu / 2.0)
    return complex(scale * rng.standard_normal(), scale * rng.standard_normal())


def snr_to_noise_power(snr_db: float, h: complex, power: float) -> float:
    """sigma^2 = |h|^2 P / 10^(SNR/10)."""
    gain = abs(h) ** 2
    if gain == 0.0:
        raise ZeroFadingCoefficient()
    if power <= 0.0:
        raise ConfigError(f"Transmit power must be positive, got {power}")
    return gain * power / 10.0 ** (snr_db / 10.0)


def noise_power_to_snr(sigma2: float, h: complex, power: float) -> float:
    """Inverse of snr_to_noise_power, in dB."""
    gain = abs(h) ** 2
    if gain == 0.0:
        raise ZeroFadingCoefficient()
    return 10.0 * np.log10(gain * power / sigma2)


def complex_noise(
    sigma2: float, shape: typing.Tuple[int, ...], rng: np.random.Generator
) -> np.ndarray:
    """n ~ CN(0, sigma^2 I)."""
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def transmit(
    symbols: np.ndarray, realization: ChannelRealization, rng: np.random.Generator
) -> np.ndarray:
    """y = h x + n (h sqrt(P) x + n in literal-power mode)."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    if realization.error_free:
        return symbols.copy()
    noise = complex_noise(realization.sigma2, symbols.shape, rng)
    return realization.amplitude * symbols + noise


def equalize(received: np.ndarray, realization: ChannelRealization) -> np.ndarray:
    """Coherent equalization with perfect CSI: y / (h sqrt(P))."""
    received = np.asarray(received, dtype=np.complex128)
    if realization.error_free:
        return received.copy()
    if realization.amplitude == 0:
        raise ZeroFadingCoefficient()
    return received / realization.amplitude


def realize(
    mode: ChannelMode,
    snr_db: float,
    fading_rng: np.random.Generator,
    mu: float = 1.0,
    power: float = 1.0,
    literal_power: bool = False,
) -> ChannelRealization:
    """Draw the link state for one image.

    The noise power follows the *average* SNR, i.e. |h|^2 is replaced by its
    mean mu, so a deep fade lowers the instantaneous SNR.
    """
    if mode is ChannelMode.ERROR_FREE:
        return ChannelRealization.ideal(power)
    sigma2 = snr_to_noise_power(snr_db, np.sqrt(mu), power)
    if mode is ChannelMode.AWGN:
        h = 1.0 + 0.0j
    else:
        h = sample_fading(mu, fading_rng)
    return ChannelRealization(
        h=h, sigma2=sigma2, power=power, mu=mu, literal_power=literal_power
    )


@dataclass(frozen=True)
class ChannelStreams:
    """Independent generators for the SR and CR fading and noise processes."""

    sr_fading: np.random.Generator
    sr_noise: np.random.Generator
    cr_fading: np.random.Generator
    cr_noise: np.random.Generator

    @classmethod
    def from_seed(cls, seed: typing.Union[int, np.random.SeedSequence]) -> "ChannelStreams":
        sequence = (
            seed
            if isinstance(seed, np.random.SeedSequence)
            else np.random.SeedSequence(seed)
        )
        children = sequence.spawn(4)
        return cls(*[np.random.default_rng(child) for child in children])


class ChannelLink:
    """One direction of the hybrid link (SR or CR) with block fading.

    Each call to send() draws a fresh realization, i.e. one fading coefficient
    per transmitted image. When snr_db is a sequence, the SNR of each image is
    drawn uniformly from it.
    """

    def __init__(
        self,
        mode: ChannelMode,
        snr_db: typing.Union[float, typing.Sequence[float]],
        fading_rng: np.random.Generator,
        noise_rng: np.random.Generator,
        mu: float = 1.0,
        power: float = 1.0,
        literal_power: bool = False,
        equalize: bool = True,
    ):
        self._mode = mode
        self._snr_grid = np.atleast_1d(np.asarray(snr_db, dtype=np.float64))
        if self._snr_grid.size == 0:
            raise ConfigError("SNR grid is empty")
        self._fading_rng = fading_rng
        self._noise_rng = noise_rng
        self._mu = mu
        self._power = power
        self._literal_power = literal_power
        self._equalize = equalize

    @property
    def mode(self) -> ChannelMode:
        return self._mode

    @property
    def equalizes(self) -> bool:
        return self._equalize

    def draw(self) -> ChannelRealization:
        if self._snr_grid.size == 1:
            snr = float(self._snr_grid[0])
        else:
            snr = float(self._fading_rng.choice(self._snr_grid))
        return realize(
            self._mode,
            snr,
            self._fading_rng,
            mu=self._mu,
            power=self._power,
            literal_power=self._literal_power,
        )

    def send(
        self,
        symbols: np.ndarray,
        realization: typing.Optional[ChannelRealization] = None,
    ) -> typing.Tuple[np.ndarray, ChannelRealization]:
        """Carry one image's symbols across the link."""
        if realization is None:
            realization = self.draw()
        received = transmit(symbols, realization, self._noise_rng)
        if self._equalize:
            received = equalize(received, realization)
        return received, realization

    def send_batch(
        self, symbols: np.ndarray
    ) -> typing.Tuple[np.ndarray, np.ndarray]:
        """Carry a batch (N, k) of images, one realization per row.

        Returns:
            Received symbols and the per-row complex gain seen by the decoder
            (1 when equalized), which backpropagation multiplies by conj(gain).
        """
        received = np.empty_like(symbols, dtype=np.complex128)
        gains = np.ones(symbols.shape[0], dtype=np.complex128)
        for i in range(symbols.shape[0]):
            received[i], realization = self.send(symbols[i])
            if not self._equalize and not realization.error_free:
                gains[i] = realization.amplitude
        return received, gains
