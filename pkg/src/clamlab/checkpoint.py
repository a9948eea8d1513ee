"""CLAMCKPT: binary checkpoints for model parameters.

Layout (all integers little-endian, all floats float32 little-endian):

    magic   8 bytes  b"CLAMCKPT"
    u32     format version (currently 1)
    u32     meta length; that many bytes of canonical JSON (sorted keys)
    u32     tensor count
    per tensor:
        u16  name length; that many bytes of UTF-8 name
        u8   ndim
        u32  per dimension
        f32  row-major data

Canonical JSON plus fixed field order makes save(load(f)) reproduce f
byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, TruncatedFileError, VersionMismatchError

MAGIC = b"CLAMCKPT"
VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedFileError(
                f"{self.path}: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def save_checkpoint(path, meta: dict, tensors: dict) -> None:
    """Write named float32 arrays plus a JSON meta blob."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    meta_bytes = canonical_json(meta).encode("utf-8")
    out += struct.pack("<I", len(meta_bytes))
    out += meta_bytes
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        name_bytes = name.encode("utf-8")
        out += struct.pack("<H", len(name_bytes))
        out += name_bytes
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path):
    """Read a CLAMCKPT file; returns (meta, ordered name->float32 array)."""
    blob = Path(path).read_bytes()
    r = _Reader(blob, str(path))
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}, found {magic!r}")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, supported {VERSION}")
    (meta_len,) = r.unpack("<I")
    meta = json.loads(r.take(meta_len).decode("utf-8"))
    (count,) = r.unpack("<I")
    tensors: dict = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        n_items = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(4 * n_items), dtype="<f4").reshape(shape)
        tensors[name] = data.astype(np.float32, copy=True)
    if r.pos != len(blob):
        raise TruncatedFileError(f"{path}: {len(blob) - r.pos} trailing bytes after payload")
    return meta, tensors
