"""Datasets and image files.

IDX files (MNIST) are big-endian: a magic word whose last byte is the number
of dimensions, one 32-bit size per dimension, then unsigned bytes. Files
ending in .gz are decompressed transparently.
"""

import gzip
import os
import struct
import typing
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, IdxFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

"""MNIST file names and the training / evaluation split"""
TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"
TRAIN_SIZE = 50000
EVALUATION_SIZE = 10000


def _read_bytes(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    try:
        with opener(path, "rb") as f:
            return f.read()
    except (OSError, EOFError) as e:
        raise IdxFormatError(f"Cannot read {path}: {e}")


def parse_idx(data: bytes, expected_magic: typing.Optional[int] = None) -> np.ndarray:
    """Unsigned-byte IDX payload as an array shaped by its header."""
    if len(data) < 4:
        raise IdxFormatError("IDX file is empty or truncated before the magic number")
    (magic,) = struct.unpack(">I", data[:4])
    if magic >> 8 != 0x08:
        raise IdxFormatError(f"Bad IDX magic 0x{magic:08x}, only unsigned bytes are supported")
    if expected_magic is not None and magic != expected_magic:
        raise IdxFormatError(f"Expected magic 0x{expected_magic:08x}, got 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if ndim == 0 or len(data) < header:
        raise IdxFormatError("IDX header is truncated")
    shape = struct.unpack(f">{ndim}I", data[4:header])
    expected = int(np.prod(shape))
    if len(data) - header != expected:
        raise IdxFormatError(
            f"IDX header announces {expected} bytes for shape {shape}, file holds {len(data) - header}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(shape).copy()


def read_idx(path: str, expected_magic: typing.Optional[int] = None) -> np.ndarray:
    if not os.path.exists(path) and os.path.exists(path + ".gz"):
        path = path + ".gz"
    return parse_idx(_read_bytes(path), expected_magic)


def load_mnist(path: str) -> np.ndarray:
    """Images of an IDX image file scaled to [0, 1], shape (N, rows, cols)."""
    raw = read_idx(path, IDX_IMAGES_MAGIC)
    if raw.shape[0] == 0:
        raise EmptyInput(f"{path} holds no images")
    if raw.shape[1] != raw.shape[2]:
        raise IdxFormatError(f"Images must be square, got {raw.shape[1]}x{raw.shape[2]}")
    return raw.astype(np.float64) / 255.0


def load_labels(path: str) -> np.ndarray:
    return read_idx(path, IDX_LABELS_MAGIC).astype(np.int64)


@dataclass(frozen=True)
class MnistSplit:
    """First 50 000 training images and 10 000 non-overlapping evaluation images."""

    train: np.ndarray
    evaluation: np.ndarray


def load_mnist_split(
    root: str, train_size: int = TRAIN_SIZE, evaluation_size: int = EVALUATION_SIZE
) -> MnistSplit:
    """Training images from the train file, evaluation images from the t10k file.

    Without a t10k file the evaluation set is taken from the images that
    follow the training slice in the train file.
    """
    images = load_mnist(os.path.join(root, TRAIN_IMAGES))
    train = images[:train_size]
    test_path = os.path.join(root, TEST_IMAGES)
    if os.path.exists(test_path) or os.path.exists(test_path + ".gz"):
        evaluation = load_mnist(test_path)[:evaluation_size]
    else:
        evaluation = images[train_size : train_size + evaluation_size]
    if evaluation.shape[0] == 0:
        raise EmptyInput(f"No evaluation images under {root}")
    return MnistSplit(train, evaluation)


def write_idx_images(path: str, images: np.ndarray):
    """Store [0, 1] images as an IDX image file (used for fixtures and exports)."""
    pixels = np.clip(np.rint(np.asarray(images) * 255.0), 0, 255).astype(np.uint8)
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, *pixels.shape)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(header + pixels.tobytes())


def synthetic_images(
    count: int, side: int, rng: np.random.Generator, channels: int = 1
) -> np.ndarray:
    """Handwriting-like images: a few blurred random strokes on black.

    Returns:
        (count, side, side) for one channel, (count, side, side, channels) otherwise
    """
    if count <= 0 or side <= 0:
        raise EmptyInput("Need a positive image count and side length")
    rows, cols = np.mgrid[0:side, 0:side].astype(np.float64)
    width = max(side / 14.0, 0.5)
    out = np.zeros((count, channels, side, side))
    for n in range(count):
        for c in range(channels):
            canvas = np.zeros((side, side))
            for _ in range(rng.integers(1, 4)):
                start, end = rng.uniform(0.2 * side, 0.8 * side, size=(2, 2))
                for t in np.linspace(0.0, 1.0, 12):
                    y, x = start + t * (end - start)
                    canvas += np.exp(-((rows - y) ** 2 + (cols - x) ** 2) / (2.0 * width**2))
            out[n, c] = np.clip(canvas / max(canvas.max(), 1e-12) * rng.uniform(0.8, 1.0), 0.0, 1.0)
    if channels == 1:
        return out[:, 0]
    return np.moveaxis(out, 1, -1)


def write_pnm(path: str, image: np.ndarray):
    """8-bit binary PGM (P5) for L x L images, PPM (P6) for L x L x 3."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise DimensionMismatch(f"Cannot store an image of shape {image.shape} as PNM")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (width, height))
        f.write(pixels.tobytes())


def read_pnm(path: str) -> np.ndarray:
    """Inverse of write_pnm, pixels scaled to [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    offset = 0
    while len(tokens) < 4:
        while offset < len(data) and data[offset : offset + 1].isspace():
            offset += 1
        if data[offset : offset + 1] == b"#":
            offset = data.index(b"\n", offset) + 1
            continue
        start = offset
        while offset < len(data) and not data[offset : offset + 1].isspace():
            offset += 1
        if start == offset:
            raise DimensionMismatch(f"{path} has a truncated PNM header")
        tokens.append(data[start:offset])
    offset += 1
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in (b"P5", b"P6") or maxval != 255:
        raise DimensionMismatch(f"{path} is not an 8-bit binary PGM/PPM file")
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    if len(data) - offset < expected:
        raise DimensionMismatch(f"{path} is truncated")
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return pixels.reshape(shape).astype(np.float64) / 255.0
