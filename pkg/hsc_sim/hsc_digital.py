"""Conventional digital transmission chain for the complementary representation.

    reals -> uniform quantizer -> fixed-ratio source coder -> K=7 rate-1/2
    convolutional code -> Gray 16-QAM -> complex symbols

and the exact inverse. With 8-bit quantization, ratio 1/5, rate 1/2 and 16-QAM
the chain carries R = 8 * 1/5 * 2 / 4 = 0.8 symbols per input real. Every
padding decision is recorded in a FrameHeader so the receiver can undo it.
The frame header layout is documented in docs/frame_format.md.
"""

import logging
import math
import struct
import typing
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, EmptyInput, PayloadLengthError
from .hsc_channel import ChannelMode, equalize, realize, transmit

"""Convolutional code: constraint length 7, generators 171 and 133 (octal)"""
CONSTRAINT_LENGTH = 7
GENERATORS = (0o171, 0o133)
MEMORY = CONSTRAINT_LENGTH - 1
STATE_COUNT = 1 << MEMORY

"""Gray map per axis: bit pair -> amplitude before the 1/sqrt(10) scaling"""
GRAY_LEVELS = {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3}
QAM_SCALE = 1.0 / np.sqrt(10.0)
_LEVEL_BY_INDEX = np.array([GRAY_LEVELS[(b >> 1, b & 1)] for b in range(4)], dtype=np.float64)
_SORTED_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0])
_BITS_BY_SORTED_LEVEL = np.array(
    [[bits[0], bits[1]] for level in _SORTED_LEVELS for bits, value in GRAY_LEVELS.items() if value == level],
    dtype=np.uint8,
)

FRAME_MAGIC = b"HSCF"
FRAME_VERSION = 1


def as_fraction(value: typing.Union[float, int, Fraction, str]) -> Fraction:
    """Exact rational for a configured ratio (0.2 -> 1/5)."""
    if isinstance(value, Fraction):
        return value
    return Fraction(value).limit_denominator(1 << 20)


@dataclass(frozen=True)
class Bitstream:
    """Ordered bits (0/1 uint8), most significant bit first."""

    bits: np.ndarray

    @classmethod
    def empty(cls) -> "Bitstream":
        return cls(np.zeros(0, dtype=np.uint8))

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, length: int) -> "Bitstream":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if bits.size < length:
            raise PayloadLengthError(f"Need {length} bits, got {bits.size}")
        return cls(bits[:length].copy())


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform quantizer settings.

    Attributes:
        bits_per_coeff: code width, 1..16
        clip_min, clip_max: fixed range; when unset each block uses its own min/max
    """

    bits_per_coeff: int = 8
    clip_min: typing.Optional[float] = None
    clip_max: typing.Optional[float] = None

    def __post_init__(self):
        if not 1 <= self.bits_per_coeff <= 16:
            raise ConfigError(f"bits_per_coeff must be in [1, 16], got {self.bits_per_coeff}")
        if (self.clip_min is None) != (self.clip_max is None):
            raise ConfigError("Set both clip_min and clip_max, or neither")
        if self.clip_min is not None and not self.clip_max > self.clip_min:
            raise ConfigError("clip_max must exceed clip_min")


@dataclass(frozen=True)
class QuantizerRange:
    """Range metadata the dequantizer needs for one block."""

    count: int
    lo: float
    hi: float
    bits_per_coeff: int

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (1 << self.bits_per_coeff)


@dataclass(frozen=True)
class ChainSpec:
    """Stage parameters of the digital chain.

    Only rate 1/2 (the K=7 convolutional code) and 16-QAM are implemented.
    """

    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    source_ratio: Fraction = Fraction(1, 5)
    code_rate: Fraction = Fraction(1, 2)
    modulation: int = 16

    def __post_init__(self):
        object.__setattr__(self, "source_ratio", as_fraction(self.source_ratio))
        object.__setattr__(self, "code_rate", as_fraction(self.code_rate))
        if not 0 < self.source_ratio <= 1:
            raise ConfigError(f"Source ratio must be in (0, 1], got {self.source_ratio}")
        if self.code_rate != Fraction(1, 2):
            raise ConfigError(f"Only a rate 1/2 channel code is available, got {self.code_rate}")
        if self.modulation != 16:
            raise ConfigError(f"Only 16-QAM is available, got order {self.modulation}")

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.modulation))

    @property
    def rate(self) -> Fraction:
        """R, channel symbols per input real"""
        return (
            self.quantizer.bits_per_coeff
            * self.source_ratio
            / self.code_rate
            / self.bits_per_symbol
        )

    def payload_symbols(self, real_count: int) -> int:
        """ceil(r * R), the symbols carrying data (code tail excluded)"""
        return math.ceil(real_count * self.rate)


@dataclass(frozen=True)
class FrameHeader:
    """Side information of one CR frame, delivered reliably.

    Attributes:
        d, side_length: CR rank and image side
        bits_per_coeff: quantizer code width
        source_ratio: source coder ratio
        blocks: per-block (count, min, max)
        source_bits: length of the source coded bitstream
        tail_bits: zero bits terminating the convolutional code
        pad_bits: zero bits appended so the coded stream fills whole symbols
        symbol_count: number of 16-QAM symbols in the frame
    """

    d: int
    side_length: int
    bits_per_coeff: int
    source_ratio: Fraction
    blocks: typing.Tuple[typing.Tuple[int, float, float], ...]
    source_bits: int
    tail_bits: int
    pad_bits: int
    symbol_count: int

    @property
    def real_count(self) -> int:
        return sum(count for count, _, _ in self.blocks)

    def ranges(self) -> typing.List[QuantizerRange]:
        return [QuantizerRange(c, lo, hi, self.bits_per_coeff) for c, lo, hi in self.blocks]

    def to_bytes(self) -> bytes:
        parts = [
            FRAME_MAGIC,
            struct.pack(
                ">BHHBIIB",
                FRAME_VERSION,
                self.d,
                self.side_length,
                self.bits_per_coeff,
                self.source_ratio.numerator,
                self.source_ratio.denominator,
                len(self.blocks),
            ),
        ]
        for count, lo, hi in self.blocks:
            parts.append(struct.pack(">Idd", count, lo, hi))
        parts.append(
            struct.pack(">IBBI", self.source_bits, self.tail_bits, self.pad_bits, self.symbol_count)
        )
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FrameHeader":
        fixed = struct.calcsize(">BHHBIIB")
        if len(data) < 4 + fixed or data[:4] != FRAME_MAGIC:
            raise PayloadLengthError("Not a CR frame header")
        version, d, side, bits, num, den, block_count = struct.unpack_from(">BHHBIIB", data, 4)
        if version != FRAME_VERSION:
            raise PayloadLengthError(f"Unsupported frame header version {version}")
        offset = 4 + fixed
        block_size = struct.calcsize(">Idd")
        tail_size = struct.calcsize(">IBBI")
        if len(data) != offset + block_count * block_size + tail_size:
            raise PayloadLengthError("Frame header length does not match its block count")
        blocks = []
        for _ in range(block_count):
            blocks.append(struct.unpack_from(">Idd", data, offset))
            offset += block_size
        source_bits, tail_bits, pad_bits, symbol_count = struct.unpack_from(">IBBI", data, offset)
        return cls(
            d, side, bits, Fraction(num, den), tuple(blocks), source_bits, tail_bits, pad_bits, symbol_count
        )


def codes_to_bits(codes: np.ndarray, width: int) -> Bitstream:
    """Fixed-width codes, most significant bit first."""
    codes = np.asarray(codes, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return Bitstream(((codes[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1))


def bits_to_codes(bitstream: Bitstream, width: int) -> np.ndarray:
    if bitstream.length % width:
        raise PayloadLengthError(f"{bitstream.length} bits do not split into {width}-bit codes")
    weights = 1 << np.arange(width - 1, -1, -1)
    return bitstream.bits.reshape(-1, width).astype(np.int64) @ weights


def quantize(
    values: np.ndarray, spec: QuantizerSpec
) -> typing.Tuple[Bitstream, QuantizerRange]:
    """Uniform mid-rise quantization over the block's range.

    Levels sit at lo + (c + 1/2) step with step = (hi - lo) / 2^bits, so the
    reconstruction error is at most step / 2 for values inside the range.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise EmptyInput("Cannot quantize an empty block")
    if not np.all(np.isfinite(values)):
        raise ValueError("Block contains non-finite values")
    if spec.clip_min is not None:
        lo, hi = float(spec.clip_min), float(spec.clip_max)
    else:
        lo, hi = float(values.min()), float(values.max())
    levels = 1 << spec.bits_per_coeff
    meta = QuantizerRange(values.size, lo, hi, spec.bits_per_coeff)
    if hi == lo:
        codes = np.zeros(values.size, dtype=np.int64)
    else:
        codes = np.clip(np.floor((values - lo) / meta.step), 0, levels - 1).astype(np.int64)
    return codes_to_bits(codes, spec.bits_per_coeff), meta


def dequantize(levels: np.ndarray, meta: QuantizerRange) -> np.ndarray:
    """Inverse of quantize; accepts integer codes or fractional levels."""
    levels = np.asarray(levels, dtype=np.float64)
    if levels.size != meta.count:
        raise PayloadLengthError(f"Expected {meta.count} codes, got {levels.size}")
    if meta.hi == meta.lo:
        return np.full(meta.count, meta.lo)
    return meta.lo + (levels + 0.5) * meta.step


def _allocation(count: int, budget: int) -> np.ndarray:
    """Bits kept per coefficient: budget spread evenly, remainder to the first ones."""
    base, extra = divmod(budget, count)
    alloc = np.full(count, base, dtype=np.int64)
    alloc[:extra] += 1
    return alloc


def source_code(
    bitstream: Bitstream, ratio: typing.Union[float, Fraction], bits_per_coeff: int = 8
) -> Bitstream:
    """Fixed-ratio source coding by reduced-precision requantization.

    The output has exactly ceil(ratio * n) bits. Each code keeps its most
    significant bits, with the budget shared as evenly as possible.
    """
    ratio = as_fraction(ratio)
    if not 0 < ratio <= 1:
        raise ConfigError(f"Source ratio must be in (0, 1], got {ratio}")
    if bitstream.length == 0:
        return Bitstream.empty()
    if ratio == 1:
        return Bitstream(bitstream.bits.copy())
    codes = bits_to_codes(bitstream, bits_per_coeff)
    budget = math.ceil(ratio * bitstream.length)
    alloc = np.minimum(_allocation(codes.size, budget), bits_per_coeff)
    out = []
    for code, kept in zip(codes, alloc):
        if kept:
            out.append(codes_to_bits(np.array([code >> (bits_per_coeff - kept)]), int(kept)).bits)
    return Bitstream(np.concatenate(out) if out else np.zeros(0, dtype=np.uint8))


def source_decode(
    bitstream: Bitstream,
    ratio: typing.Union[float, Fraction],
    bits_per_coeff: int,
    count: int,
) -> np.ndarray:
    """Quantizer levels for the count coefficients behind a source coded stream.

    Coefficients that lost low-order bits decode to the middle of the range
    those bits spanned, so the levels are fractional unless ratio is 1.
    """
    ratio = as_fraction(ratio)
    if not 0 < ratio <= 1:
        raise ConfigError(f"Source ratio must be in (0, 1], got {ratio}")
    if count == 0:
        return np.zeros(0)
    if ratio == 1:
        return bits_to_codes(bitstream, bits_per_coeff).astype(np.float64)
    budget = math.ceil(ratio * count * bits_per_coeff)
    if bitstream.length != budget:
        raise PayloadLengthError(f"Expected {budget} source bits, got {bitstream.length}")
    alloc = np.minimum(_allocation(count, budget), bits_per_coeff)
    levels = np.empty(count)
    offset = 0
    for i, kept in enumerate(alloc):
        dropped = bits_per_coeff - int(kept)
        top = 0
        if kept:
            chunk = Bitstream(bitstream.bits[offset : offset + kept])
            top = int(bits_to_codes(chunk, int(kept))[0])
            offset += kept
        levels[i] = top * (1 << dropped) + ((1 << dropped) - 1) / 2.0
    return levels


def _generator_taps() -> np.ndarray:
    return np.array(
        [[(g >> (MEMORY - i)) & 1 for i in range(CONSTRAINT_LENGTH)] for g in GENERATORS],
        dtype=np.int64,
    )


def _parity(values: np.ndarray) -> np.ndarray:
    values = values.copy()
    result = np.zeros_like(values)
    while np.any(values):
        result ^= values & 1
        values >>= 1
    return result


def _trellis() -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Predecessor states and expected output pairs for each next state.

    State bits hold the last six inputs, the most recent in bit 5.
    """
    next_states = np.arange(STATE_COUNT)
    predecessors = np.stack([((next_states << 1) & (STATE_COUNT - 1)) | lsb for lsb in (0, 1)])
    inputs = next_states >> (MEMORY - 1)
    outputs = np.empty((2, STATE_COUNT, 2), dtype=np.uint8)
    for branch in (0, 1):
        register = (inputs << MEMORY) | predecessors[branch]
        for j, g in enumerate(GENERATORS):
            outputs[branch, :, j] = _parity(register & g)
    return predecessors, inputs, outputs


_PREDECESSORS, _INPUTS, _OUTPUTS = _trellis()


def channel_encode(bitstream: Bitstream) -> Bitstream:
    """Terminated K=7 rate-1/2 convolutional code; appends six zero tail bits."""
    if bitstream.length == 0:
        return Bitstream.empty()
    u = np.concatenate([bitstream.bits.astype(np.int64), np.zeros(MEMORY, dtype=np.int64)])
    coded = np.empty((u.size, 2), dtype=np.uint8)
    for j, taps in enumerate(_generator_taps()):
        coded[:, j] = np.convolve(u, taps)[: u.size] % 2
    return Bitstream(coded.reshape(-1))


def channel_decode(bitstream: Bitstream) -> Bitstream:
    """Hard-decision Viterbi decoding of a terminated codeword."""
    if bitstream.length == 0:
        return Bitstream.empty()
    if bitstream.length % 2 or bitstream.length // 2 < MEMORY:
        raise PayloadLengthError(f"{bitstream.length} bits is not a terminated rate-1/2 codeword")
    received = bitstream.bits.reshape(-1, 2)
    steps = received.shape[0]
    metrics = np.full(STATE_COUNT, np.inf)
    metrics[0] = 0.0
    decisions = np.empty((steps, STATE_COUNT), dtype=np.uint8)
    for t in range(steps):
        branch = np.sum(_OUTPUTS != received[t], axis=2)
        candidates = metrics[_PREDECESSORS] + branch
        choice = (candidates[1] < candidates[0]).astype(np.uint8)
        decisions[t] = choice
        metrics = np.where(choice, candidates[1], candidates[0])

    state = 0
    decoded = np.empty(steps, dtype=np.uint8)
    for t in range(steps - 1, -1, -1):
        decoded[t] = _INPUTS[state]
        state = _PREDECESSORS[decisions[t, state], state]
    return Bitstream(decoded[: steps - MEMORY])


def qam16_modulate(bitstream: Bitstream) -> typing.Tuple[np.ndarray, int]:
    """Gray 16-QAM, b3 b2 on I and b1 b0 on Q.

    Returns:
        Symbols and the number of zero bits padded to fill the last symbol
    """
    pad = (-bitstream.length) % 4
    bits = np.concatenate([bitstream.bits, np.zeros(pad, dtype=np.uint8)]).reshape(-1, 4).astype(np.int64)
    in_phase = _LEVEL_BY_INDEX[2 * bits[:, 0] + bits[:, 1]]
    quadrature = _LEVEL_BY_INDEX[2 * bits[:, 2] + bits[:, 3]]
    return QAM_SCALE * (in_phase + 1j * quadrature), pad


def _slice_axis(values: np.ndarray) -> np.ndarray:
    nearest = np.argmin(np.abs(values[:, None] / QAM_SCALE - _SORTED_LEVELS[None, :]), axis=1)
    return _BITS_BY_SORTED_LEVEL[nearest]


def qam16_demodulate(symbols: np.ndarray, pad: int = 0) -> Bitstream:
    """Minimum-distance slicing per axis, then drop the recorded padding."""
    symbols = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    bits = np.concatenate([_slice_axis(symbols.real), _slice_axis(symbols.imag)], axis=1)
    bits = bits.reshape(-1)
    return Bitstream(bits[: bits.size - pad].copy())


def chain_transmit(
    blocks: typing.Sequence[np.ndarray],
    spec: ChainSpec,
    d: int = 0,
    side_length: int = 0,
) -> typing.Tuple[np.ndarray, FrameHeader]:
    """Blocks of reals -> 16-QAM symbols and the frame header describing them."""
    blocks = [np.asarray(block, dtype=np.float64).reshape(-1) for block in blocks]
    blocks = [block for block in blocks if block.size]
    bits_per_coeff = spec.quantizer.bits_per_coeff
    if not blocks:
        header = FrameHeader(d, side_length, bits_per_coeff, spec.source_ratio, (), 0, 0, 0, 0)
        return np.zeros(0, dtype=np.complex128), header

    streams, metas = [], []
    for block in blocks:
        bits, meta = quantize(block, spec.quantizer)
        streams.append(bits.bits)
        metas.append(meta)
    quantized = Bitstream(np.concatenate(streams))
    source = source_code(quantized, spec.source_ratio, bits_per_coeff)
    coded = channel_encode(source)
    symbols, pad = qam16_modulate(coded)
    header = FrameHeader(
        d=d,
        side_length=side_length,
        bits_per_coeff=bits_per_coeff,
        source_ratio=spec.source_ratio,
        blocks=tuple((m.count, m.lo, m.hi) for m in metas),
        source_bits=source.length,
        tail_bits=MEMORY,
        pad_bits=pad,
        symbol_count=symbols.size,
    )
    return symbols, header


def chain_receive(symbols: np.ndarray, header: FrameHeader) -> typing.List[np.ndarray]:
    """demodulate -> Viterbi -> source decode -> dequantize, one array per block."""
    symbols = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    if symbols.size != header.symbol_count:
        raise PayloadLengthError(
            f"Frame announces {header.symbol_count} symbols, received {symbols.size}"
        )
    if header.symbol_count == 0:
        return []
    coded = qam16_demodulate(symbols, header.pad_bits)
    source = channel_decode(coded)
    if source.length != header.source_bits:
        raise PayloadLengthError(
            f"Decoded {source.length} source bits, header announces {header.source_bits}"
        )
    levels = source_decode(source, header.source_ratio, header.bits_per_coeff, header.real_count)
    out, offset = [], 0
    for meta in header.ranges():
        out.append(dequantize(levels[offset : offset + meta.count], meta))
        offset += meta.count
    return out


def reconstruction_bound(header: FrameHeader) -> typing.List[float]:
    """Worst-case noiseless reconstruction error per block.

    Half the coarsest step any coefficient ends up with after source coding.
    """
    if header.real_count == 0:
        return []
    total_bits = header.real_count * header.bits_per_coeff
    budget = math.ceil(header.source_ratio * total_bits)
    kept = min(budget // header.real_count, header.bits_per_coeff)
    if header.source_ratio == 1:
        kept = header.bits_per_coeff
    return [(hi - lo) / (1 << (kept + 1)) for _, lo, hi in header.blocks]


class DigitalChain:
    """The CR transmission chain as a component with its own logger."""

    def __init__(self, logger: logging.Logger, spec: typing.Optional[ChainSpec] = None):
        self._logger = logger
        self._spec = spec or ChainSpec()

    @property
    def spec(self) -> ChainSpec:
        return self._spec

    @property
    def rate(self) -> Fraction:
        return self._spec.rate

    def transmit(
        self, blocks: typing.Sequence[np.ndarray], d: int = 0, side_length: int = 0
    ) -> typing.Tuple[np.ndarray, FrameHeader]:
        symbols, header = chain_transmit(blocks, self._spec, d, side_length)
        self._logger.debug(
            "CR frame: %d reals -> %d source bits -> %d symbols (%d pad bits)",
            header.real_count,
            header.source_bits,
            header.symbol_count,
            header.pad_bits,
        )
        return symbols, header

    def receive(self, symbols: np.ndarray, header: FrameHeader) -> typing.List[np.ndarray]:
        return chain_receive(symbols, header)


def measure_ber(
    snr_db: float,
    bit_count: int,
    rng: np.random.Generator,
    noise_rng: typing.Optional[np.random.Generator] = None,
    frame_bits: int = 10000,
) -> float:
    """Post-Viterbi bit error rate of coded 16-QAM over an AWGN channel."""
    if bit_count <= 0:
        raise EmptyInput("Need at least one bit to measure BER")
    noise_rng = noise_rng if noise_rng is not None else rng
    realization = realize(ChannelMode.AWGN, snr_db, rng)
    errors = 0
    sent = 0
    while sent < bit_count:
        size = min(frame_bits, bit_count - sent)
        bits = Bitstream(rng.integers(0, 2, size=size, dtype=np.uint8))
        symbols, pad = qam16_modulate(channel_encode(bits))
        received = equalize(transmit(symbols, realization, noise_rng), realization)
        decoded = channel_decode(qam16_demodulate(received, pad))
        errors += int(np.count_nonzero(decoded.bits != bits.bits))
        sent += size
    return errors / bit_count
