"""Named-tensor snapshot files.

Layout (everything little-endian):

    magic "FGT1" | u32 format version | u32 tensor count
    per tensor: u32 name length | UTF-8 name | u32 rank | u64 extents... |
                raw float32 data

Round-trips are bit-exact; loads fail closed on any malformed field.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import SnapshotFormatError
from ..ioutils import atomic_write_bytes
from .tensor import Tensor

MAGIC = b"FGT1"
VERSION = 1


def _as_float32_array(name: str, value) -> np.ndarray:
    arr = value.data if isinstance(value, Tensor) else np.asarray(value)
    if arr.dtype != np.float32:
        raise SnapshotFormatError(
            f"tensor {name!r} has dtype {arr.dtype}; snapshots store float32 only"
        )
    return arr


def pack_tensors(named: dict[str, np.ndarray | Tensor]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(named))]
    for name, value in named.items():
        arr = _as_float32_array(name, value)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.astype("<f4", copy=False).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf: bytes, offset: int = 0):
        self.buf = buf
        self.pos = offset

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise SnapshotFormatError(f"truncated snapshot: {what}")
        piece = self.buf[self.pos : self.pos + n]
        self.pos += n
        return piece

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def unpack_tensors(buf: bytes, offset: int = 0) -> tuple[dict[str, np.ndarray], int]:
    r = _Reader(buf, offset)
    if r.take(4, "magic bytes") != MAGIC:
        raise SnapshotFormatError("bad magic bytes: not a named-tensor snapshot")
    version = r.u32("format version")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    count = r.u32("tensor count")
    named: dict[str, np.ndarray] = {}
    for index in range(count):
        name_len = r.u32(f"tensor {index}: name length")
        try:
            name = r.take(name_len, f"tensor {index}: name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SnapshotFormatError(f"tensor {index}: name is not valid UTF-8") from exc
        rank = r.u32(f"tensor {name!r}: rank")
        extents = struct.unpack(f"<{rank}Q", r.take(8 * rank, f"tensor {name!r}: extents"))
        size = 1
        for e in extents:
            size *= e
        raw = r.take(4 * size, f"tensor {name!r}: data")
        arr = np.frombuffer(raw, dtype="<f4").reshape(extents).astype(np.float32)
        if name in named:
            raise SnapshotFormatError(f"duplicate tensor name {name!r}")
        named[name] = arr
    return named, r.pos


def save_tensors(named: dict[str, np.ndarray | Tensor], path: str) -> None:
    atomic_write_bytes(path, pack_tensors(named))


def load_tensors(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()
    named, end = unpack_tensors(buf)
    if end != len(buf):
        raise SnapshotFormatError(f"{len(buf) - end} trailing bytes after the last tensor")
    return named
