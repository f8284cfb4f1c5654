"""Differentiable operations on :class:`~lwplg.tensor.Tensor`.

Rank-4 activations use (n, c, h, w) layout. Each op computes its forward
value with numpy or a backend kernel and registers a closure returning one
gradient per parent.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from . import kernels
from .tensor import Tensor, ShapeError, add_macs

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_rank4(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected rank-4 (n, c, h, w) input, got shape {x.shape}")


# -- elementwise arithmetic -------------------------------------------------------

def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data * b.data, (a, b), backward)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return Tensor._from_op(np.asarray(out, dtype=x.dtype), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor._from_op(x.data.reshape(shape), (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)

    def backward(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return Tensor._from_op(x.data.transpose(axes), (x,), backward)


def getitem(x: Tensor, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return (full,)

    return Tensor._from_op(x.data[idx], (x,), backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        out = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return out

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


# -- linear algebra ---------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimension mismatch: {a.shape[-1]} vs {b.shape[-2]}")
    out = np.matmul(a.data, b.data)
    add_macs(out.size * a.shape[-1])

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor._from_op(out, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for x of shape (n, in) and weight (out, in)."""
    y = matmul(x, transpose(weight, (1, 0)))
    return add(y, bias) if bias is not None else y


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, groups: int = 1) -> Tensor:
    _check_rank4(x, "conv2d")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d: weight must be rank-4, got shape {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, c_per_group, kh, kw = weight.shape
    if c_in % groups:
        raise ShapeError(f"conv2d: input channels c_in={c_in} not divisible by groups={groups}")
    if c_out % groups:
        raise ShapeError(f"conv2d: output channels c_out={c_out} not divisible by groups={groups}")
    if c_per_group != c_in // groups:
        raise ShapeError(f"conv2d: weight c_in/groups={c_per_group} but input gives {c_in // groups}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} exceeds padded input {h + 2 * padding}x{w + 2 * padding}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({c_out},)")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    add_macs(n * oh * ow * kh * kw * c_per_group * c_out)

    depthwise = groups == c_in and c_out == c_in and c_per_group == 1
    pointwise = kh == 1 and kw == 1 and padding == 0 and groups == 1

    if depthwise:
        w3 = weight.data.reshape(c_out, kh, kw)
        out = kernels.dwconv_forward(x.data, w3, stride, padding)

        def backward(g):
            gx, gw = kernels.dwconv_backward(g, x.data, w3, stride, padding)
            return [gx, gw.reshape(weight.shape)] + ([g.sum(axis=(0, 2, 3))] if bias is not None else [])

    elif pointwise:
        xs = x.data[:, :, ::stride, ::stride] if stride > 1 else x.data
        cols = np.ascontiguousarray(xs).reshape(n, c_in, oh * ow)
        wm = weight.data.reshape(c_out, c_in)
        out = np.matmul(wm, cols).reshape(n, c_out, oh, ow)

        def backward(g):
            g2 = g.reshape(n, c_out, oh * ow)
            gw = np.einsum("nol,nil->oi", g2, cols).reshape(weight.shape)
            gcols = np.matmul(wm.T, g2).reshape(n, c_in, oh, ow)
            if stride > 1:
                gx = np.zeros_like(x.data)
                gx[:, :, ::stride, ::stride] = gcols
            else:
                gx = gcols
            return [gx, gw] + ([g.sum(axis=(0, 2, 3))] if bias is not None else [])

    else:
        cols = kernels.im2col(x.data, kh, kw, stride, padding)  # (n, c_in*kh*kw, L)
        rows_per_group = c_per_group * kh * kw
        og = c_out // groups
        wm = weight.data.reshape(groups, og, rows_per_group)
        cg = cols.reshape(n, groups, rows_per_group, oh * ow)
        out = np.einsum("gok,ngkl->ngol", wm, cg, optimize=True).reshape(n, c_out, oh, ow)

        def backward(g):
            g2 = g.reshape(n, groups, og, oh * ow)
            gw = np.einsum("ngol,ngkl->gok", g2, cg, optimize=True).reshape(weight.shape)
            gcols = np.einsum("gok,ngol->ngkl", wm, g2, optimize=True).reshape(n, c_in * kh * kw, oh * ow)
            gx = kernels.col2im(gcols, x.shape, kh, kw, stride, padding)
            return [gx, gw] + ([g.sum(axis=(0, 2, 3))] if bias is not None else [])

    if bias is not None:
        out = out + bias.data[None, :, None, None]
        parents = (x, weight, bias)
    else:
        parents = (x, weight)
    return Tensor._from_op(np.ascontiguousarray(out, dtype=x.dtype), parents, backward)


# -- normalisation ----------------------------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the channel vector at every spatial site (axis 1)."""
    c = x.shape[1]
    if c == 0:
        raise ShapeError("layer_norm: zero channels")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: gamma/beta must have shape ({c},)")
    bshape = (1, c) + (1,) * (x.ndim - 2)
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)
    red = (0,) + tuple(range(2, x.ndim))

    def backward(g):
        dxhat = g * gamma.data.reshape(bshape)
        gx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return Tensor._from_op(out.astype(x.dtype, copy=False), (x, gamma, beta), backward)


def grn(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Global response normalisation over the spatial extent of each sample."""
    _check_rank4(x, "grn")
    n, c = x.shape[:2]
    bshape = (1, c, 1, 1)
    gnorm = np.sqrt((x.data * x.data).sum(axis=(2, 3), keepdims=True))  # (n, c, 1, 1)
    denom = gnorm.mean(axis=1, keepdims=True) + eps
    nx = gnorm / denom
    gam = gamma.data.reshape(bshape)
    out = gam * (x.data * nx) + beta.data.reshape(bshape) + x.data

    def backward(g):
        a = (g * gam * x.data).sum(axis=(2, 3), keepdims=True)  # dL/dN per channel
        dg = a / denom - (a * gnorm).sum(axis=1, keepdims=True) / (c * denom * denom)
        safe = np.where(gnorm > 0, gnorm, 1.0)
        gx = g * (gam * nx + 1.0) + np.where(gnorm > 0, dg / safe, 0.0) * x.data
        return gx, (g * x.data * nx).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return Tensor._from_op(out.astype(x.dtype, copy=False), (x, gamma, beta), backward)


# -- activations --------------------------------------------------------------------

def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    pos = d >= 0
    ez = np.exp(np.where(pos, -d, d))
    s = np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez)).astype(x.dtype)

    def backward(g):
        return (g * s * (1 - s),)

    return Tensor._from_op(s, (x,), backward)


def silu(x: Tensor) -> Tensor:
    d = x.data
    pos = d >= 0
    ez = np.exp(np.where(pos, -d, d))
    s = np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez)).astype(x.dtype)

    def backward(g):
        return (g * (s * (1 + d * (1 - s))),)

    return Tensor._from_op(d * s, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    d = x.data
    cdf = 0.5 * (1.0 + erf(d / _SQRT2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * d * d)
        return (g * (cdf + d * pdf),)

    return Tensor._from_op((d * cdf).astype(x.dtype, copy=False), (x,), backward)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "silu":
        return silu(x)
    if kind == "gelu":
        return gelu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(y, (x,), backward)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits`` (n, k)."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


# -- resampling ---------------------------------------------------------------------

def adaptive_max_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _check_rank4(x, "adaptive_max_pool2d")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"adaptive_max_pool2d: output size must be >= 1, got {out_h}x{out_w}")
    h, w = x.shape[2], x.shape[3]
    out, idx = kernels.adaptive_max_forward(x.data, out_h, out_w)

    def backward(g):
        return (kernels.adaptive_max_backward(g, idx, h, w),)

    return Tensor._from_op(out, (x,), backward)


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _check_rank4(x, "adaptive_avg_pool2d")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"adaptive_avg_pool2d: output size must be >= 1, got {out_h}x{out_w}")
    h, w = x.shape[2], x.shape[3]
    out = kernels.adaptive_avg_forward(x.data, out_h, out_w)

    def backward(g):
        return (kernels.adaptive_avg_backward(g, h, w),)

    return Tensor._from_op(out, (x,), backward)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Half-pixel-centre bilinear resampling without corner alignment."""
    _check_rank4(x, "bilinear_resize")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize: output size must be >= 1, got {out_h}x{out_w}")
    h, w = x.shape[2], x.shape[3]
    if (h, w) == (out_h, out_w):
        return x
    out = kernels.bilinear_forward(x.data, out_h, out_w)

    def backward(g):
        return (kernels.bilinear_backward(g, h, w),)

    return Tensor._from_op(out, (x,), backward)


def pad2d(x: Tensor, bottom: int, right: int) -> Tensor:
    """Zero-pad the bottom and right edges."""
    if bottom == 0 and right == 0:
        return x
    h, w = x.shape[2], x.shape[3]
    out = np.pad(x.data, ((0, 0), (0, 0), (0, bottom), (0, right)))

    def backward(g):
        return (np.ascontiguousarray(g[:, :, :h, :w]),)

    return Tensor._from_op(out, (x,), backward)


# -- channel and window plumbing ---------------------------------------------------

def split_channels(x: Tensor, c_a: int) -> tuple[Tensor, Tensor]:
    c = x.shape[1]
    if not 0 <= c_a <= c:
        raise ShapeError(f"split_channels: c_a={c_a} outside [0, {c}]")
    return x[:, :c_a], x[:, c_a:]


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels: mismatched n/h/w {a.shape} vs {b.shape}")
    return concat([a, b], axis=1)


def window_partition(x: Tensor, win: int) -> Tensor:
    """(n, c, h, w) -> (n * windows, win * win, c), windows in row-major order."""
    _check_rank4(x, "window_partition")
    n, c, h, w = x.shape
    if h % win or w % win:
        raise ShapeError(f"window_partition: {h}x{w} not divisible by window {win}")
    t = reshape(x, (n, c, h // win, win, w // win, win))
    t = transpose(t, (0, 2, 4, 3, 5, 1))
    return reshape(t, (n * (h // win) * (w // win), win * win, c))


def window_reverse(windows: Tensor, win: int, n: int, h: int, w: int) -> Tensor:
    """Inverse of :func:`window_partition`."""
    if h % win or w % win:
        raise ShapeError(f"window_reverse: {h}x{w} not divisible by window {win}")
    c = windows.shape[-1]
    t = reshape(windows, (n, h // win, w // win, win, win, c))
    t = transpose(t, (0, 5, 1, 3, 2, 4))
    return reshape(t, (n, c, h, w))


def global_avg_pool(x: Tensor) -> Tensor:
    """(n, c, h, w) -> (n, c)."""
    return mean(x, axis=(2, 3))
