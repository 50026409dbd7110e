#!/usr/bin/env python3
import pytest
import struct

import numpy as np

from hsc_sim.errors import DimensionMismatch, EmptyInput, IdxFormatError
from hsc_sim.hsc_data import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    TRAIN_IMAGES,
    load_labels,
    load_mnist,
    load_mnist_split,
    parse_idx,
    read_pnm,
    synthetic_images,
    write_idx_images,
    write_pnm,
)


def idx_bytes(pixels: np.ndarray) -> bytes:
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, *pixels.shape) + pixels.astype(np.uint8).tobytes()


class TestParseIdx:
    def test_two_images(self):
        pixels = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
        np.testing.assert_array_equal(parse_idx(idx_bytes(pixels)), pixels)

    def test_labels(self, tmp_path):
        path = tmp_path / "labels"
        path.write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, 3) + bytes([7, 0, 9]))
        np.testing.assert_array_equal(load_labels(str(path)), [7, 0, 9])

    def test_empty_file(self):
        with pytest.raises(IdxFormatError):
            parse_idx(b"")

    def test_bad_magic(self):
        with pytest.raises(IdxFormatError):
            parse_idx(struct.pack(">II", 0x00000D01, 1) + b"\x00" * 8)

    def test_size_disagrees_with_header(self):
        data = idx_bytes(np.zeros((2, 3, 3)))
        with pytest.raises(IdxFormatError):
            parse_idx(data[:-1])

    def test_wrong_kind(self):
        with pytest.raises(IdxFormatError):
            parse_idx(idx_bytes(np.zeros((1, 2, 2))), IDX_LABELS_MAGIC)


class TestLoadMnist:
    def test_scaling(self, tmp_path):
        path = tmp_path / "images"
        path.write_bytes(idx_bytes(np.array([[[0, 255], [51, 102]]])))
        np.testing.assert_allclose(load_mnist(str(path)), [[[0.0, 1.0], [0.2, 0.4]]])

    def test_gzip(self, tmp_path):
        images = np.random.default_rng(0).integers(0, 256, size=(3, 4, 4)) / 255.0
        path = str(tmp_path / "images.gz")
        write_idx_images(path, images)
        np.testing.assert_allclose(load_mnist(path), images)

    def test_no_images(self, tmp_path):
        path = tmp_path / "images"
        path.write_bytes(idx_bytes(np.zeros((0, 4, 4))))
        with pytest.raises(EmptyInput):
            load_mnist(str(path))

    def test_split_without_test_file(self, tmp_path):
        images = np.random.default_rng(1).integers(0, 256, size=(10, 4, 4)) / 255.0
        write_idx_images(str(tmp_path / (TRAIN_IMAGES + ".gz")), images)
        split = load_mnist_split(str(tmp_path), train_size=6, evaluation_size=3)
        np.testing.assert_allclose(split.train, images[:6])
        np.testing.assert_allclose(split.evaluation, images[6:9])

    def test_split_needs_evaluation_images(self, tmp_path):
        write_idx_images(str(tmp_path / TRAIN_IMAGES), np.zeros((4, 2, 2)))
        with pytest.raises(EmptyInput):
            load_mnist_split(str(tmp_path), train_size=4)


class TestSyntheticImages:
    def test_shape_and_range(self):
        images = synthetic_images(5, 8, np.random.default_rng(2))
        assert images.shape == (5, 8, 8)
        assert images.min() >= 0.0 and images.max() <= 1.0

    def test_colour(self):
        assert synthetic_images(2, 6, np.random.default_rng(3), channels=3).shape == (2, 6, 6, 3)

    def test_reproducible(self):
        first = synthetic_images(3, 6, np.random.default_rng(4))
        assert np.array_equal(first, synthetic_images(3, 6, np.random.default_rng(4)))

    def test_empty(self):
        with pytest.raises(EmptyInput):
            synthetic_images(0, 6, np.random.default_rng(5))


class TestPnm:
    def test_grayscale(self, tmp_path):
        image = np.random.default_rng(6).integers(0, 256, size=(5, 5)) / 255.0
        path = str(tmp_path / "image.pgm")
        write_pnm(path, image)
        assert open(path, "rb").read(2) == b"P5"
        np.testing.assert_allclose(read_pnm(path), image)

    def test_colour(self, tmp_path):
        image = np.random.default_rng(7).integers(0, 256, size=(4, 4, 3)) / 255.0
        path = str(tmp_path / "image.ppm")
        write_pnm(path, image)
        np.testing.assert_allclose(read_pnm(path), image)

    def test_clipped(self, tmp_path):
        path = str(tmp_path / "image.pgm")
        write_pnm(path, np.array([[-0.5, 1.5]]))
        np.testing.assert_allclose(read_pnm(path), [[0.0, 1.0]])

    def test_unsupported_shape(self, tmp_path):
        with pytest.raises(DimensionMismatch):
            write_pnm(str(tmp_path / "image.pgm"), np.zeros((2, 2, 2)))
