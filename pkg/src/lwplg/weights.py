"""Named-tensor weight files.

Layout (little-endian)::

    b"LWPV"  u32 version  u32 count
    count x [ u32 name_len | utf-8 name | u8 dtype (0=f32, 1=f64) | u8 rank | u32 dims[rank] | raw data ]
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LWPV"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class WeightsFormatError(ValueError):
    pass


class WeightStore(dict):
    """Insertion-ordered map from slash-delimited names to arrays."""

    def __setitem__(self, name, value):
        if name in self:
            raise WeightsFormatError(f"duplicate tensor name {name!r}")
        super().__setitem__(name, value)

    def numel(self) -> int:
        return int(sum(np.asarray(v).size for v in self.values()))

    def equal(self, other: "WeightStore") -> bool:
        """Bit-exact comparison of names, order, dtypes, shapes and contents."""
        if list(self) != list(other):
            return False
        for k in self:
            a, b = np.asarray(self[k]), np.asarray(other[k])
            if a.dtype != b.dtype or a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return True


def encode(store) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for name, arr in store.items():
        arr = np.asarray(arr)
        if arr.dtype not in _TAGS:
            raise WeightsFormatError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", _TAGS[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[_TAGS[arr.dtype]]).tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> WeightStore:
    view = memoryview(buf)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise WeightsFormatError(f"truncated file while reading {what} at byte {pos}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise WeightsFormatError("bad magic: not an LWPV weights file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise WeightsFormatError(f"unsupported version {version} (expected {VERSION})")
    store = WeightStore()
    for i in range(count):
        (nlen,) = struct.unpack("<I", take(4, f"entry {i} name length"))
        try:
            name = bytes(take(nlen, f"entry {i} name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightsFormatError(f"entry {i}: name is not valid UTF-8") from exc
        tag, rank = struct.unpack("<BB", take(2, f"{name} dtype/rank"))
        if tag not in _DTYPES:
            raise WeightsFormatError(f"{name}: unknown dtype tag {tag}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"{name} dims"))
        dtype = _DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(bytes(take(nbytes, f"{name} data")), dtype=dtype).reshape(dims)
        if name in store:
            raise WeightsFormatError(f"duplicate tensor name {name!r}")
        store[name] = arr.astype(dtype.newbyteorder("="))
    if pos != len(view):
        raise WeightsFormatError(f"{len(view) - pos} trailing bytes after {count} entries")
    return store


def save_weights(store, path) -> None:
    Path(path).write_bytes(encode(store))


def load_weights(path) -> WeightStore:
    return decode(Path(path).read_bytes())
