"""Minimal binary PPM (P6) / PGM (P5) reader and writer."""
from __future__ import annotations

from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def _tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping # comments."""
    out, pos, n = [], 2, len(buf)
    while len(out) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed header")
        out.append(int(buf[start:pos]))
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise ImageFormatError("malformed header")
    return out, pos + 1


def decode_image(buf: bytes) -> np.ndarray:
    """Return a uint8 array of shape (h, w, 3) for P6 or (h, w, 1) for P5."""
    magic = buf[:2]
    if magic not in (b"P6", b"P5"):
        raise ImageFormatError(f"unsupported image type {magic!r}; expected binary PPM (P6) or PGM (P5)")
    (w, h, maxval), pos = _tokens(buf, 3)
    if w <= 0 or h <= 0:
        raise ImageFormatError(f"bad image size {w}x{h}")
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"bad maxval {maxval}")
    ch = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * ch * dtype.itemsize
    if len(buf) - pos < need:
        raise ImageFormatError(f"truncated pixel data: need {need} bytes, have {len(buf) - pos}")
    px = np.frombuffer(buf, dtype=dtype, count=w * h * ch, offset=pos).reshape(h, w, ch)
    if maxval != 255:
        px = np.rint(px.astype(np.float64) * (255.0 / maxval))
    return px.astype(np.uint8)


def read_image(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc.strerror}") from exc
    return decode_image(buf)


def encode_image(px: np.ndarray) -> bytes:
    px = np.asarray(px)
    if px.ndim == 2:
        px = px[..., None]
    if px.ndim != 3 or px.shape[2] not in (1, 3):
        raise ImageFormatError(f"expected (h, w), (h, w, 1) or (h, w, 3), got {px.shape}")
    h, w, ch = px.shape
    magic = b"P6" if ch == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode() + np.clip(px, 0, 255).astype(np.uint8).tobytes()


def write_image(path, px: np.ndarray) -> None:
    Path(path).write_bytes(encode_image(px))


def to_input(px: np.ndarray, channels: int = 3) -> np.ndarray:
    """(h, w, c) uint8 to a (1, channels, h, w) float32 batch standardized to [-1, 1]."""
    x = px.astype(np.float32) / 255.0
    if x.shape[2] == 1 and channels == 3:
        x = np.repeat(x, 3, axis=2)
    if x.shape[2] != channels:
        raise ImageFormatError(f"image has {x.shape[2]} channels, model expects {channels}")
    x = (x - 0.5) / 0.5
    return np.ascontiguousarray(x.transpose(2, 0, 1)[None])
