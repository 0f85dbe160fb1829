import struct
import zlib

import numpy as np
import pytest

from vceclip import checkpoint
from vceclip.config import DEFAULT_CLASS_NAMES, ModelConfig
from vceclip.errors import ChecksumError, FormatError
from vceclip.model import ClipModel

from helpers import randomize


@pytest.fixture
def model():
    m = ClipModel.initialize(ModelConfig.toy(), DEFAULT_CLASS_NAMES)
    randomize(m, np.random.default_rng(0))
    return m


def test_round_trip_is_byte_identical(model, tmp_path):
    checkpoint.save(model, tmp_path / "a.vcec")
    loaded = checkpoint.load(tmp_path / "a.vcec")
    checkpoint.save(loaded, tmp_path / "b.vcec")
    assert (tmp_path / "a.vcec").read_bytes() == (tmp_path / "b.vcec").read_bytes()


def test_parameters_and_metadata_survive(model):
    loaded = checkpoint.loads(checkpoint.dumps(model))
    for name, arr in model.state_arrays().items():
        assert loaded.named_parameters()[name].data.tobytes() == arr.tobytes(), name
    assert loaded.config == model.config
    assert loaded.class_names == model.class_names
    assert loaded.vocab.tokens == model.vocab.tokens
    assert loaded.template == model.template


def test_loaded_model_predicts_identically(model):
    images = np.random.default_rng(1).random((2, 32, 32, 3))
    loaded = checkpoint.loads(checkpoint.dumps(model))
    a, pa = model.predict(images)
    b, pb = loaded.predict(images)
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(pa, pb)


def test_layout_starts_with_magic_and_version(model):
    buf = checkpoint.dumps(model)
    assert buf[:4] == b"VCEC"
    assert struct.unpack("<I", buf[4:8])[0] == checkpoint.FORMAT_VERSION
    assert struct.unpack("<I", buf[-4:])[0] == zlib.crc32(buf[:-4])


@pytest.mark.parametrize("where", [10, 200, -20])
def test_flipped_byte_fails_checksum(model, where):
    buf = bytearray(checkpoint.dumps(model))
    buf[where] ^= 0x01
    with pytest.raises(ChecksumError):
        checkpoint.loads(bytes(buf))


def test_bad_magic(model):
    buf = b"NOPE" + checkpoint.dumps(model)[4:]
    with pytest.raises(FormatError, match="magic"):
        checkpoint.loads(buf)


def test_too_short():
    with pytest.raises(FormatError):
        checkpoint.loads(b"VCEC")


def test_unknown_version(model):
    body = bytearray(checkpoint.dumps(model)[:-4])
    body[4:8] = struct.pack("<I", 99)
    with pytest.raises(FormatError, match="version"):
        checkpoint.loads(bytes(body) + struct.pack("<I", zlib.crc32(body)))


def test_truncated_table_with_valid_crc(model):
    body = checkpoint.dumps(model)[:-4][:-100]
    with pytest.raises(FormatError):
        checkpoint.loads(body + struct.pack("<I", zlib.crc32(body)))
