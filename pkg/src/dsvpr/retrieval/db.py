"""Descriptor database and its bit-exact DSFV file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from dsvpr.errors import DataError, FormatError

MAGIC = b"DSFV"
VERSION = 1
NORM_TOL = 1e-5
_HAS_POS = 0x01
_HAS_FRAME = 0x02


@dataclass(frozen=True)
class DbEntry:
    id: str
    descriptor: np.ndarray
    position: tuple[float, float] | None = None
    frame_index: int | None = None


class DescriptorDb:
    """Immutable ordered store; descriptors are held as float32 rows, as on disk."""

    def __init__(self, entries: Sequence[DbEntry]):
        if not entries:
            raise DataError("descriptor database must not be empty")
        dim = len(entries[0].descriptor)
        ids: set[str] = set()
        rows = np.empty((len(entries), dim), dtype=np.float32)
        for i, e in enumerate(entries):
            vec = np.asarray(e.descriptor, dtype=np.float64).reshape(-1)
            if vec.shape[0] != dim:
                raise DataError(f"entry {e.id!r}: dim {vec.shape[0]} != {dim}")
            if e.id in ids:
                raise DataError(f"duplicate id {e.id!r}")
            if not np.all(np.isfinite(vec)) or abs(np.linalg.norm(vec) - 1.0) > NORM_TOL:
                raise DataError(f"entry {e.id!r}: descriptor norm {np.linalg.norm(vec):.6f} is not 1")
            ids.add(e.id)
            rows[i] = vec
        rows.setflags(write=False)
        self.dim = dim
        self.ids: list[str] = [e.id for e in entries]
        self.matrix = rows
        self.positions: list[tuple[float, float] | None] = [
            None if e.position is None else (float(e.position[0]), float(e.position[1])) for e in entries
        ]
        self.frames: list[int | None] = [None if e.frame_index is None else int(e.frame_index) for e in entries]

    def __len__(self) -> int:
        return len(self.ids)

    def entry(self, i: int) -> DbEntry:
        return DbEntry(self.ids[i], self.matrix[i], self.positions[i], self.frames[i])

    def __iter__(self):
        return (self.entry(i) for i in range(len(self)))

    @property
    def has_positions(self) -> bool:
        return all(p is not None for p in self.positions)

    @property
    def has_frames(self) -> bool:
        return all(f is not None for f in self.frames)


def build_db(entries: Iterable[DbEntry]) -> DescriptorDb:
    return DescriptorDb(list(entries))


# ----------------------------------------------------------------------- io
def encode_db(db: DescriptorDb) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<BIQ", VERSION, db.dim, len(db))
    for i in range(len(db)):
        raw_id = db.ids[i].encode("utf-8")
        if len(raw_id) > 0xFFFF:
            raise DataError(f"id too long for the file format: {db.ids[i][:32]}...")
        pos, frame = db.positions[i], db.frames[i]
        flags = (_HAS_POS if pos is not None else 0) | (_HAS_FRAME if frame is not None else 0)
        out += struct.pack("<H", len(raw_id)) + raw_id + struct.pack("<B", flags)
        if pos is not None:
            out += struct.pack("<dd", *pos)
        if frame is not None:
            out += struct.pack("<q", frame)
        out += db.matrix[i].astype("<f4").tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated while reading {what}: need {n} bytes, {len(self.buf) - self.pos} left", self.pos)
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_db(buf: bytes) -> DescriptorDb:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, expected DSFV", 0)
    (version,) = r.unpack("<B", "version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    dim, count = r.unpack("<IQ", "header")
    entries = []
    for k in range(count):
        (n,) = r.unpack("<H", f"id length of entry {k}")
        start = r.pos
        try:
            rid = r.take(n, f"id of entry {k}").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"id of entry {k} is not UTF-8", start) from None
        flag_at = r.pos
        (flags,) = r.unpack("<B", f"flags of entry {k}")
        if flags & ~(_HAS_POS | _HAS_FRAME):
            raise FormatError(f"unknown flag bits {flags:#x} in entry {k}", flag_at)
        pos = r.unpack("<dd", f"position of entry {k}") if flags & _HAS_POS else None
        frame = r.unpack("<q", f"frame of entry {k}")[0] if flags & _HAS_FRAME else None
        vec = np.frombuffer(r.take(4 * dim, f"descriptor of entry {k}"), dtype="<f4").astype(np.float32)
        entries.append(DbEntry(rid, vec, pos, frame))
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes", r.pos)
    try:
        return DescriptorDb(entries)
    except DataError as exc:
        raise FormatError(f"invalid content: {exc}", r.pos) from None


def persist_db(db: DescriptorDb, path: str | Path) -> None:
    Path(path).write_bytes(encode_db(db))


def load_db(path: str | Path) -> DescriptorDb:
    return decode_db(Path(path).read_bytes())
