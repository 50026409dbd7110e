"""Binary checkpoints for transceivers and adapters.

Layout (little-endian throughout):

    magic        4s   b"HSCM"
    version      H
    kind         B    0 = VAE, 1 = VQ-VAE, 2 = adapter pair
    k            I    SR length in complex symbols
    networks     B    number of named networks
    per network:
        name     B + utf-8 bytes
        layers   H
        per layer: fan_in I, fan_out I, activation B
    weights      float64, per network, per layer: W (fan_in x fan_out, row-major) then b
    codebook     B flag, then entries I, width I, float64 entries x width
    d tag        B flag, then d I
"""

import os
import struct
import typing
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, DimensionMismatch, MissingCheckpoint
from .hsc_codec import CodecParameters
from .mlp import ACTIVATIONS, DenseLayer, Mlp

MAGIC = b"HSCM"
FORMAT_VERSION = 1

"""Checkpoint kinds"""
KIND_VAE = 0
KIND_VQVAE = 1
KIND_ADAPTER = 2

_ACTIVATION_NAMES = {code: name for name, code in ACTIVATIONS.items()}
_CODEC_NETWORKS = {
    "encoder": "trunk",
    "mean_head": "mean_head",
    "scale_head": "scale_head",
    "decoder": "decoder",
}


@dataclass
class Checkpoint:
    kind: int
    k: int
    networks: typing.Dict[str, Mlp]
    codebook: typing.Optional[np.ndarray] = None
    d_tag: typing.Optional[int] = None


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    parts = [
        MAGIC,
        struct.pack("<HBIB", FORMAT_VERSION, checkpoint.kind, checkpoint.k, len(checkpoint.networks)),
    ]
    for name, net in checkpoint.networks.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<B", len(encoded)) + encoded)
        parts.append(struct.pack("<H", len(net.layers)))
        for layer in net.layers:
            parts.append(
                struct.pack("<IIB", layer.fan_in, layer.fan_out, ACTIVATIONS[layer.activation])
            )
    for net in checkpoint.networks.values():
        for layer in net.layers:
            parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    if checkpoint.codebook is None:
        parts.append(struct.pack("<B", 0))
    else:
        entries, width = checkpoint.codebook.shape
        parts.append(struct.pack("<BII", 1, entries, width))
        parts.append(np.ascontiguousarray(checkpoint.codebook, dtype="<f8").tobytes())
    if checkpoint.d_tag is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<BI", 1, checkpoint.d_tag))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._offset = 0

    def unpack(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self._offset + size > len(self._data):
            raise CheckpointError("Checkpoint is truncated")
        values = struct.unpack_from(fmt, self._data, self._offset)
        self._offset += size
        return values

    def raw(self, size: int) -> bytes:
        if self._offset + size > len(self._data):
            raise CheckpointError("Checkpoint is truncated")
        chunk = self._data[self._offset : self._offset + size]
        self._offset += size
        return chunk

    def floats(self, shape: typing.Tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.raw(8 * count), dtype="<f8").astype(np.float64).reshape(shape)

    @property
    def exhausted(self) -> bool:
        return self._offset == len(self._data)


def decode_checkpoint(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.raw(4) != MAGIC:
        raise CheckpointError("Not a checkpoint file (bad magic)")
    version, kind, k, count = reader.unpack("<HBIB")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")
    if kind not in (KIND_VAE, KIND_VQVAE, KIND_ADAPTER):
        raise CheckpointError(f"Unknown checkpoint kind {kind}")

    descriptors = []
    for _ in range(count):
        (length,) = reader.unpack("<B")
        name = reader.raw(length).decode("utf-8")
        (layer_count,) = reader.unpack("<H")
        layers = []
        for _ in range(layer_count):
            fan_in, fan_out, code = reader.unpack("<IIB")
            if code not in _ACTIVATION_NAMES:
                raise CheckpointError(f"Unknown activation code {code} in network {name}")
            layers.append((fan_in, fan_out, _ACTIVATION_NAMES[code]))
        if not layers:
            raise CheckpointError(f"Network {name} has no layers")
        descriptors.append((name, layers))

    networks = {}
    try:
        for name, layers in descriptors:
            dense = []
            for fan_in, fan_out, activation in layers:
                weight = reader.floats((fan_in, fan_out))
                bias = reader.floats((fan_out,))
                dense.append(DenseLayer(weight, bias, activation))
            networks[name] = Mlp(dense)
    except DimensionMismatch as e:
        raise CheckpointError(f"Broken shape chain: {e}")

    codebook = None
    (flag,) = reader.unpack("<B")
    if flag:
        entries, width = reader.unpack("<II")
        codebook = reader.floats((entries, width))
    d_tag = None
    (flag,) = reader.unpack("<B")
    if flag:
        (d_tag,) = reader.unpack("<I")
    if not reader.exhausted:
        raise CheckpointError("Trailing bytes after checkpoint")
    return Checkpoint(kind, k, networks, codebook, d_tag)


def save_checkpoint(path: typing.Union[str, os.PathLike], checkpoint: Checkpoint):
    with open(path, "wb") as f:
        f.write(encode_checkpoint(checkpoint))


def load_checkpoint(path: typing.Union[str, os.PathLike]) -> Checkpoint:
    if not os.path.exists(path):
        raise MissingCheckpoint(f"Checkpoint {path} does not exist")
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())


def codec_checkpoint(params: CodecParameters) -> Checkpoint:
    networks = {}
    for stored, attribute in _CODEC_NETWORKS.items():
        net = getattr(params, attribute)
        if net is not None:
            networks[stored] = net
    kind = KIND_VAE if params.variant == "vae" else KIND_VQVAE
    return Checkpoint(kind, params.k, networks, params.codebook)


def codec_from_checkpoint(checkpoint: Checkpoint) -> CodecParameters:
    if checkpoint.kind not in (KIND_VAE, KIND_VQVAE):
        raise CheckpointError("Checkpoint does not hold a transceiver")
    required = ["encoder", "mean_head", "decoder"]
    if checkpoint.kind == KIND_VAE:
        required.append("scale_head")
    missing = [name for name in required if name not in checkpoint.networks]
    if missing:
        raise CheckpointError(f"Checkpoint lacks networks {missing}")
    if checkpoint.kind == KIND_VQVAE and checkpoint.codebook is None:
        raise CheckpointError("VQ-VAE checkpoint lacks its codebook")
    try:
        params = CodecParameters(
            trunk=checkpoint.networks["encoder"],
            mean_head=checkpoint.networks["mean_head"],
            scale_head=checkpoint.networks.get("scale_head") if checkpoint.kind == KIND_VAE else None,
            decoder=checkpoint.networks["decoder"],
            codebook=checkpoint.codebook if checkpoint.kind == KIND_VQVAE else None,
        )
    except DimensionMismatch as e:
        raise CheckpointError(f"Broken shape chain: {e}")
    if params.k != checkpoint.k:
        raise CheckpointError(f"Header k={checkpoint.k} but heads emit k={params.k}")
    return params


def save_codec(path: typing.Union[str, os.PathLike], params: CodecParameters):
    save_checkpoint(path, codec_checkpoint(params))


def load_codec(path: typing.Union[str, os.PathLike]) -> CodecParameters:
    return codec_from_checkpoint(load_checkpoint(path))
