"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy
implementation in ``_kernels_py`` takes over. Set ``LWPLG_PURE_PYTHON=1``
to force the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _kernels_py

NAMES = (
    "im2col",
    "col2im",
    "dwconv_forward",
    "dwconv_backward",
    "adaptive_max_forward",
    "adaptive_max_backward",
    "adaptive_avg_forward",
    "adaptive_avg_backward",
    "bilinear_forward",
    "bilinear_backward",
)


def _load_compiled() -> ModuleType | None:
    if os.environ.get("LWPLG_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _kernels


compiled = _load_compiled()
BACKEND = "cython" if compiled is not None else "numpy"
_impl: ModuleType = compiled if compiled is not None else _kernels_py


def use_backend(name: str) -> str:
    """Switch kernel backend at runtime; returns the previous one."""
    global _impl, BACKEND
    prev = BACKEND
    if name == "numpy":
        _impl, BACKEND = _kernels_py, "numpy"
    elif name == "cython":
        if compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        _impl, BACKEND = compiled, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return prev


def _c(a):
    return np.ascontiguousarray(a)


def im2col(x, kh, kw, stride, pad):
    return _impl.im2col(_c(x), kh, kw, stride, pad)


def col2im(cols, x_shape, kh, kw, stride, pad):
    return _impl.col2im(_c(cols), tuple(x_shape), kh, kw, stride, pad)


def dwconv_forward(x, w, stride, pad):
    return _impl.dwconv_forward(_c(x), _c(w), stride, pad)


def dwconv_backward(gout, x, w, stride, pad):
    return _impl.dwconv_backward(_c(gout), _c(x), _c(w), stride, pad)


def adaptive_max_forward(x, oh, ow):
    return _impl.adaptive_max_forward(_c(x), oh, ow)


def adaptive_max_backward(gout, idx, h, w):
    return _impl.adaptive_max_backward(_c(gout), _c(idx), h, w)


def adaptive_avg_forward(x, oh, ow):
    return _impl.adaptive_avg_forward(_c(x), oh, ow)


def adaptive_avg_backward(gout, h, w):
    return _impl.adaptive_avg_backward(_c(gout), h, w)


def bilinear_forward(x, oh, ow):
    return _impl.bilinear_forward(_c(x), oh, ow)


def bilinear_backward(gout, h, w):
    return _impl.bilinear_backward(_c(gout), h, w)
