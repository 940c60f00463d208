"""DSWT weight container.

Layout (little-endian, no padding)::

    b"DSWT" | u8 version=1 | u32 count
    per tensor: u16 name_len | name (UTF-8) | u8 rank | rank x u32 dims | f32 data (row-major)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from dsvpr.errors import FormatError

MAGIC = b"DSWT"
VERSION = 1


def encode_weights(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<BI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:40]}...")
        if arr.ndim > 0xFF:
            raise ValueError(f"tensor {name} has rank {arr.ndim}")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated file while reading {what}", self.pos)
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_weights(buf: bytes) -> dict[str, np.ndarray]:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, expected DSWT", 0)
    (version,) = r.unpack("<B", "version")
    if version != VERSION:
        raise FormatError(f"unsupported DSWT version {version}", 4)
    (count,) = r.unpack("<I", "tensor count")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        start = r.pos
        (name_len,) = r.unpack("<H", "name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("tensor name is not UTF-8", start + 2) from exc
        if name in out:
            raise FormatError(f"duplicate tensor name {name!r}", start)
        (rank,) = r.unpack("<B", "rank")
        dims = r.unpack(f"<{rank}I", "dims")
        n = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(r.take(4 * n, f"data of {name!r}"), dtype="<f4")
        out[name] = data.reshape(dims).astype(np.float32)
    if r.pos != len(buf):
        raise FormatError("trailing bytes after last tensor", r.pos)
    return out


def save_weights(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_weights(tensors))


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    return decode_weights(Path(path).read_bytes())
