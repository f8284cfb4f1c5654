"""Pure-numpy kernels. Same signatures as the compiled ``_kernels`` module."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh, ow = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    win = sliding_window_view(_pad(x, pad), (kh, kw), axis=(2, 3))
    win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    # (n, c, oh, ow, kh, kw) -> (n, c, kh, kw, oh, ow)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    oh, ow = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(out)


def dwconv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    n, c, h, wd = x.shape
    kh, kw = w.shape[1], w.shape[2]
    oh, ow = _out_size(h, kh, stride, pad), _out_size(wd, kw, stride, pad)
    xp = _pad(x, pad)
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            tap = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            out += tap * w[:, i, j][None, :, None, None]
    return out


def dwconv_backward(gout: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int, pad: int):
    n, c, h, wd = x.shape
    kh, kw = w.shape[1], w.shape[2]
    oh, ow = gout.shape[2], gout.shape[3]
    xp = _pad(x, pad)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None), slice(i, i + stride * oh, stride), slice(j, j + stride * ow, stride))
            gw[:, i, j] = (gout * xp[sl]).sum(axis=(0, 2, 3))
            gxp[sl] += gout * w[:, i, j][None, :, None, None]
    if pad:
        gxp = gxp[:, :, pad : pad + h, pad : pad + wd]
    return np.ascontiguousarray(gxp), gw


def _bins(n_in: int, n_out: int):
    return [(math.floor(i * n_in / n_out), math.ceil((i + 1) * n_in / n_out)) for i in range(n_out)]


def adaptive_max_forward(x: np.ndarray, oh: int, ow: int):
    n, c, h, w = x.shape
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    idx = np.empty((n, c, oh, ow), dtype=np.int64)
    for i, (r0, r1) in enumerate(_bins(h, oh)):
        for j, (c0, c1) in enumerate(_bins(w, ow)):
            region = x[:, :, r0:r1, c0:c1].reshape(n, c, -1)
            # argmax returns the first maximum in row-major scan order
            k = region.argmax(axis=2)
            out[:, :, i, j] = np.take_along_axis(region, k[..., None], axis=2)[..., 0]
            bw = c1 - c0
            idx[:, :, i, j] = (r0 + k // bw) * w + (c0 + k % bw)
    return out, idx


def adaptive_max_backward(gout: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c = gout.shape[:2]
    gx = np.zeros((n, c, h * w), dtype=gout.dtype)
    flat_g = gout.reshape(n, c, -1)
    flat_i = idx.reshape(n, c, -1)
    rows = np.arange(n)[:, None]
    cols = np.arange(c)[None, :]
    # one bin per pass: indices inside a pass are distinct, so += is safe
    for b in range(flat_g.shape[2]):
        gx[rows, cols, flat_i[:, :, b]] += flat_g[:, :, b]
    return gx.reshape(n, c, h, w)


def adaptive_avg_forward(x: np.ndarray, oh: int, ow: int) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    for i, (r0, r1) in enumerate(_bins(h, oh)):
        for j, (c0, c1) in enumerate(_bins(w, ow)):
            out[:, :, i, j] = x[:, :, r0:r1, c0:c1].sum(axis=(2, 3)) / ((r1 - r0) * (c1 - c0))
    return out


def adaptive_avg_backward(gout: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c, oh, ow = gout.shape
    gx = np.zeros((n, c, h, w), dtype=gout.dtype)
    for i, (r0, r1) in enumerate(_bins(h, oh)):
        for j, (c0, c1) in enumerate(_bins(w, ow)):
            gx[:, :, r0:r1, c0:c1] += (gout[:, :, i, j] / ((r1 - r0) * (c1 - c0)))[:, :, None, None]
    return gx


def _lerp_axis(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    return i0, i1, frac


def bilinear_forward(x: np.ndarray, oh: int, ow: int) -> np.ndarray:
    h, w = x.shape[2], x.shape[3]
    y0, y1, fy = _lerp_axis(h, oh)
    x0, x1, fx = _lerp_axis(w, ow)
    fy = fy.astype(x.dtype)[:, None]
    fx = fx.astype(x.dtype)[None, :]
    top = x[:, :, y0][:, :, :, x0] * (1 - fx) + x[:, :, y0][:, :, :, x1] * fx
    bot = x[:, :, y1][:, :, :, x0] * (1 - fx) + x[:, :, y1][:, :, :, x1] * fx
    return np.ascontiguousarray(top * (1 - fy) + bot * fy)


def bilinear_backward(gout: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c, oh, ow = gout.shape
    y0, y1, fy = _lerp_axis(h, oh)
    x0, x1, fx = _lerp_axis(w, ow)
    # separable: rows then columns, each a dense (in, out) interpolation matrix
    ry = np.zeros((h, oh), dtype=gout.dtype)
    np.add.at(ry, (y0, np.arange(oh)), 1 - fy)
    np.add.at(ry, (y1, np.arange(oh)), fy)
    rx = np.zeros((w, ow), dtype=gout.dtype)
    np.add.at(rx, (x0, np.arange(ow)), 1 - fx)
    np.add.at(rx, (x1, np.arange(ow)), fx)
    return np.ascontiguousarray(np.einsum("ho,ncop,wp->nchw", ry, gout, rx))
