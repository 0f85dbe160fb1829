"""Versioned binary checkpoint.

Layout (all integers little-endian unsigned 32-bit)::

    b"VCEC"
    format_version
    len, UTF-8 JSON {"class_names", "model", "prompt_template"}
    count, then per token: len, UTF-8 token           (vocabulary, id order)
    count, then per tensor: len, UTF-8 name, rank, extents..., float64 LE payload
    CRC-32 of every preceding byte
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .errors import ChecksumError, FormatError
from .model import ClipModel
from .text import Vocabulary

MAGIC = b"VCEC"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


def _u32(n: int) -> bytes:
    return _U32.pack(n)


def _blob(data: bytes) -> bytes:
    return _u32(len(data)) + data


def dumps(model: ClipModel) -> bytes:
    meta = {
        "class_names": list(model.class_names),
        "model": model.config.to_dict(),
        "prompt_template": model.template,
    }
    parts = [MAGIC, _u32(FORMAT_VERSION), _blob(json.dumps(meta, sort_keys=True).encode("utf-8"))]
    parts.append(_u32(len(model.vocab.tokens)))
    parts += [_blob(tok.encode("utf-8")) for tok in model.vocab.tokens]
    params = model.named_parameters()
    parts.append(_u32(len(params)))
    for name, p in params.items():
        parts.append(_blob(name.encode("utf-8")))
        parts.append(_u32(p.data.ndim))
        parts += [_u32(n) for n in p.data.shape]
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + _u32(zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def loads(buf: bytes) -> ClipModel:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    body, stored = buf[:-4], _U32.unpack(buf[-4:])[0]
    if zlib.crc32(body) != stored:
        raise ChecksumError("checkpoint checksum mismatch")
    r = _Reader(body)
    r.take(4)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    meta = json.loads(r.text())
    config = ModelConfig.from_dict(meta["model"])
    vocab = Vocabulary([r.text() for _ in range(r.u32())])
    arrays = {}
    for _ in range(r.u32()):
        name = r.text()
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(body):
        raise FormatError("trailing bytes after tensor table")
    model = ClipModel.initialize(config, meta["class_names"], meta["prompt_template"])
    if model.vocab.tokens != vocab.tokens:
        model = dataclasses.replace(model, vocab=vocab)
    model.load_state_arrays(arrays)
    return model


def save(model: ClipModel, path: str | os.PathLike) -> None:
    Path(path).write_bytes(dumps(model))


def load(path: str | os.PathLike) -> ClipModel:
    return loads(Path(path).read_bytes())
