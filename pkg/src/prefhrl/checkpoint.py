"""Versioned binary checkpoints with deterministic, bit-exact round trips.

Layout (all little-endian): an 8-byte magic, a u32 format version, a u64
length-prefixed JSON metadata block, then a u32 entry count followed by named
entries.  Each entry is a u16 length-prefixed UTF-8 name, a u8 kind tag
(0 = float64 array, 1 = int64 array, 2 = raw bytes), a u8 ndim, ndim u64
dimensions and the payload.  Identical state always serializes to identical
bytes, so `save(load(save(x)))` is a fixed point.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PHRLCKPT"
FORMAT_VERSION = 1

_KIND_F64 = 0
_KIND_I64 = 1
_KIND_BYTES = 2


class CheckpointError(ValueError):
    """Raised for truncated, corrupt or version-mismatched checkpoints."""


def pack(meta: dict, entries: dict) -> bytes:
    """Serialize JSON-able `meta` plus named arrays/bytes to the container format."""
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    out.append(struct.pack("<Q", len(meta_blob)))
    out.append(meta_blob)
    out.append(struct.pack("<I", len(entries)))
    for name, value in entries.items():
        name_blob = name.encode()
        out.append(struct.pack("<H", len(name_blob)))
        out.append(name_blob)
        if isinstance(value, (bytes, bytearray)):
            out.append(struct.pack("<BB", _KIND_BYTES, 1))
            out.append(struct.pack("<Q", len(value)))
            out.append(bytes(value))
        else:
            arr = np.asarray(value)
            if arr.dtype.kind == "f":
                kind, dtype = _KIND_F64, "<f8"
            elif arr.dtype.kind in "iub":
                kind, dtype = _KIND_I64, "<i8"
            else:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for entry {name!r}")
            out.append(struct.pack("<BB", kind, arr.ndim))
            out.append(struct.pack(f"<{max(arr.ndim, 1)}Q", *(arr.shape or (0,))))
            out.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    return b"".join(out)


def unpack(blob: bytes) -> tuple[dict, dict]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(8)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} unsupported")
    (meta_len,) = struct.unpack("<Q", take(8))
    meta = json.loads(bytes(take(meta_len)).decode())
    (n_entries,) = struct.unpack("<I", take(4))
    entries: dict = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode()
        kind, ndim = struct.unpack("<BB", take(2))
        dims = struct.unpack(f"<{max(ndim, 1)}Q", take(8 * max(ndim, 1)))
        if kind == _KIND_BYTES:
            entries[name] = bytes(take(dims[0]))
        elif kind in (_KIND_F64, _KIND_I64):
            shape = tuple(dims[:ndim]) if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            dtype = "<f8" if kind == _KIND_F64 else "<i8"
            data = np.frombuffer(take(count * 8), dtype=dtype)
            entries[name] = data.reshape(shape).copy()
        else:
            raise CheckpointError(f"unknown entry kind {kind}")
    if pos != len(view):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return meta, entries


def save(path, meta: dict, entries: dict) -> None:
    Path(path).write_bytes(pack(meta, entries))


def load(path) -> tuple[dict, dict]:
    return unpack(Path(path).read_bytes())
