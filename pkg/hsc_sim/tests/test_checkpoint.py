#!/usr/bin/env python3
import pytest

import numpy as np

from hsc_sim.checkpoint import (
    KIND_VQVAE,
    MAGIC,
    Checkpoint,
    codec_checkpoint,
    codec_from_checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_codec,
    save_codec,
)
from hsc_sim.errors import CheckpointError, MissingCheckpoint
from hsc_sim.hsc_codec import CodecArchitecture, CodecParameters
from hsc_sim.mlp import Mlp

SMALL = CodecArchitecture(input_size=16, hidden_sizes=(8, 4), k=2)


def assert_same_params(first: CodecParameters, second: CodecParameters):
    assert first.variant == second.variant
    assert len(first.parameters()) == len(second.parameters())
    for a, b in zip(first.parameters(), second.parameters()):
        assert np.array_equal(a, b)


class TestCodecCheckpoint:
    def test_vae_file_round_trip(self, tmp_path):
        params = CodecParameters.initialize(SMALL, np.random.default_rng(0))
        path = tmp_path / "vae_k2.hscm"
        save_codec(path, params)
        assert path.read_bytes()[:4] == MAGIC
        assert_same_params(load_codec(path), params)

    def test_vqvae_keeps_codebook(self):
        params = CodecParameters.initialize(SMALL, np.random.default_rng(1), "vqvae", codebook_size=5)
        checkpoint = decode_checkpoint(encode_checkpoint(codec_checkpoint(params)))
        assert checkpoint.kind == KIND_VQVAE
        restored = codec_from_checkpoint(checkpoint)
        assert np.array_equal(restored.codebook, params.codebook)
        assert restored.scale_head is None

    def test_d_tag_survives(self):
        net = Mlp.initialize([4, 3, 4], ["relu", "linear"], np.random.default_rng(2))
        data = encode_checkpoint(Checkpoint(2, 2, {"decoder_adapter": net}, d_tag=7))
        assert decode_checkpoint(data).d_tag == 7


class TestBrokenCheckpoint:
    @pytest.fixture
    def data(self):
        params = CodecParameters.initialize(SMALL, np.random.default_rng(3))
        return encode_checkpoint(codec_checkpoint(params))

    def test_truncated(self, data):
        with pytest.raises(CheckpointError):
            decode_checkpoint(data[:-3])

    def test_trailing_bytes(self, data):
        with pytest.raises(CheckpointError):
            decode_checkpoint(data + b"\x00")

    def test_bad_magic(self, data):
        with pytest.raises(CheckpointError):
            decode_checkpoint(b"NOPE" + data[4:])

    def test_adapter_is_not_a_codec(self):
        net = Mlp.initialize([4, 3, 4], ["relu", "linear"], np.random.default_rng(4))
        with pytest.raises(CheckpointError):
            codec_from_checkpoint(Checkpoint(2, 2, {"encoder_adapter": net}, d_tag=1))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingCheckpoint):
            load_codec(tmp_path / "absent.hscm")

    def test_missing_file_is_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_codec(tmp_path / "absent.hscm")
