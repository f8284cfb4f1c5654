# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Signatures mirror ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _out_size(Py_ssize_t n, Py_ssize_t k, Py_ssize_t s, Py_ssize_t p) nogil:
    return (n + 2 * p - k) // s + 1


def im2col(real[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = _out_size(h, kh, stride, pad), ow = _out_size(w, kw, stride, pad)
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, r, q, row, iy, ix
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for r in range(oh):
                            iy = r * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for q in range(ow):
                                ix = q * stride + j - pad
                                if ix >= 0 and ix < w:
                                    out[b, row, r * ow + q] = x[b, ch, iy, ix]
    return out_arr


def col2im(real[:, :, ::1] cols, x_shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = _out_size(h, kh, stride, pad), ow = _out_size(w, kw, stride, pad)
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, r, q, row, iy, ix
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for r in range(oh):
                            iy = r * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for q in range(ow):
                                ix = q * stride + j - pad
                                if ix >= 0 and ix < w:
                                    out[b, ch, iy, ix] += cols[b, row, r * ow + q]
    return out_arr


def dwconv_forward(real[:, :, :, ::1] x, real[:, :, ::1] w, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2]
    cdef Py_ssize_t oh = _out_size(h, kh, stride, pad), ow = _out_size(wd, kw, stride, pad)
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c, oh, ow), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, r, q, i, j, iy, ix
    cdef real acc
    with nogil:
        for b in range(n):
            for ch in range(c):
                for r in range(oh):
                    for q in range(ow):
                        acc = 0
                        for i in range(kh):
                            iy = r * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = q * stride + j - pad
                                if ix >= 0 and ix < wd:
                                    acc = acc + x[b, ch, iy, ix] * w[ch, i, j]
                        out[b, ch, r, q] = acc
    return out_arr


def dwconv_backward(real[:, :, :, ::1] gout, real[:, :, :, ::1] x, real[:, :, ::1] w, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2]
    cdef Py_ssize_t oh = gout.shape[2], ow = gout.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((n, c, h, wd), dtype=dtype)
    gw_arr = np.zeros((c, kh, kw), dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef real[:, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, ch, r, q, i, j, iy, ix
    cdef real g
    with nogil:
        for b in range(n):
            for ch in range(c):
                for r in range(oh):
                    for q in range(ow):
                        g = gout[b, ch, r, q]
                        for i in range(kh):
                            iy = r * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = q * stride + j - pad
                                if ix >= 0 and ix < wd:
                                    gw[ch, i, j] += g * x[b, ch, iy, ix]
                                    gx[b, ch, iy, ix] += g * w[ch, i, j]
    return gx_arr, gw_arr


cdef inline Py_ssize_t _bin_start(Py_ssize_t i, Py_ssize_t n_in, Py_ssize_t n_out) nogil:
    return (i * n_in) // n_out


cdef inline Py_ssize_t _bin_end(Py_ssize_t i, Py_ssize_t n_in, Py_ssize_t n_out) nogil:
    return ((i + 1) * n_in + n_out - 1) // n_out


def adaptive_max_forward(real[:, :, :, ::1] x, int oh, int ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    idx_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, ch, i, j, r, q, r0, r1, c0, c1, best_i
    cdef real best, v
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    r0 = _bin_start(i, h, oh)
                    r1 = _bin_end(i, h, oh)
                    for j in range(ow):
                        c0 = _bin_start(j, w, ow)
                        c1 = _bin_end(j, w, ow)
                        best = x[b, ch, r0, c0]
                        best_i = r0 * w + c0
                        for r in range(r0, r1):
                            for q in range(c0, c1):
                                v = x[b, ch, r, q]
                                # strict > keeps the first maximum; NaN never wins
                                if v > best:
                                    best = v
                                    best_i = r * w + q
                        out[b, ch, i, j] = best
                        idx[b, ch, i, j] = best_i
    return out_arr, idx_arr


def adaptive_max_backward(real[:, :, :, ::1] gout, cnp.int64_t[:, :, :, ::1] idx, int h, int w):
    cdef Py_ssize_t n = gout.shape[0], c = gout.shape[1], oh = gout.shape[2], ow = gout.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, ch, i, j, k
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        k = idx[b, ch, i, j]
                        gx[b, ch, k // w, k % w] += gout[b, ch, i, j]
    return gx_arr


def adaptive_avg_forward(real[:, :, :, ::1] x, int oh, int ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, r, q, r0, r1, c0, c1
    cdef real acc
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    r0 = _bin_start(i, h, oh)
                    r1 = _bin_end(i, h, oh)
                    for j in range(ow):
                        c0 = _bin_start(j, w, ow)
                        c1 = _bin_end(j, w, ow)
                        acc = 0
                        for r in range(r0, r1):
                            for q in range(c0, c1):
                                acc = acc + x[b, ch, r, q]
                        out[b, ch, i, j] = acc / ((r1 - r0) * (c1 - c0))
    return out_arr


def adaptive_avg_backward(real[:, :, :, ::1] gout, int h, int w):
    cdef Py_ssize_t n = gout.shape[0], c = gout.shape[1], oh = gout.shape[2], ow = gout.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, ch, i, j, r, q, r0, r1, c0, c1
    cdef real g
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    r0 = _bin_start(i, h, oh)
                    r1 = _bin_end(i, h, oh)
                    for j in range(ow):
                        c0 = _bin_start(j, w, ow)
                        c1 = _bin_end(j, w, ow)
                        g = gout[b, ch, i, j] / ((r1 - r0) * (c1 - c0))
                        for r in range(r0, r1):
                            for q in range(c0, c1):
                                gx[b, ch, r, q] += g
    return gx_arr


cdef void _lerp_axis(Py_ssize_t n_in, Py_ssize_t n_out, Py_ssize_t[::1] i0,
                     Py_ssize_t[::1] i1, double[::1] frac) nogil:
    cdef double scale = <double>n_in / <double>n_out
    cdef double src
    cdef Py_ssize_t k
    for k in range(n_out):
        src = (k + 0.5) * scale - 0.5
        if src < 0:
            src = 0
        if src > n_in - 1:
            src = n_in - 1
        i0[k] = <Py_ssize_t>floor(src)
        i1[k] = i0[k] + 1 if i0[k] + 1 < n_in else n_in - 1
        frac[k] = src - i0[k]


def bilinear_forward(real[:, :, :, ::1] x, int oh, int ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t[::1] y0 = np.empty(oh, dtype=np.intp), y1 = np.empty(oh, dtype=np.intp)
    cdef Py_ssize_t[::1] x0 = np.empty(ow, dtype=np.intp), x1 = np.empty(ow, dtype=np.intp)
    cdef double[::1] fy = np.empty(oh), fx = np.empty(ow)
    cdef Py_ssize_t b, ch, i, j
    cdef real wy, wx, top, bot
    with nogil:
        _lerp_axis(h, oh, y0, y1, fy)
        _lerp_axis(w, ow, x0, x1, fx)
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    wy = <real>fy[i]
                    for j in range(ow):
                        wx = <real>fx[j]
                        top = x[b, ch, y0[i], x0[j]] * (1 - wx) + x[b, ch, y0[i], x1[j]] * wx
                        bot = x[b, ch, y1[i], x0[j]] * (1 - wx) + x[b, ch, y1[i], x1[j]] * wx
                        out[b, ch, i, j] = top * (1 - wy) + bot * wy
    return out_arr


def bilinear_backward(real[:, :, :, ::1] gout, int h, int w):
    cdef Py_ssize_t n = gout.shape[0], c = gout.shape[1], oh = gout.shape[2], ow = gout.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t[::1] y0 = np.empty(oh, dtype=np.intp), y1 = np.empty(oh, dtype=np.intp)
    cdef Py_ssize_t[::1] x0 = np.empty(ow, dtype=np.intp), x1 = np.empty(ow, dtype=np.intp)
    cdef double[::1] fy = np.empty(oh), fx = np.empty(ow)
    cdef Py_ssize_t b, ch, i, j
    cdef real wy, wx, g
    with nogil:
        _lerp_axis(h, oh, y0, y1, fy)
        _lerp_axis(w, ow, x0, x1, fx)
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    wy = <real>fy[i]
                    for j in range(ow):
                        wx = <real>fx[j]
                        g = gout[b, ch, i, j]
                        gx[b, ch, y0[i], x0[j]] += g * (1 - wy) * (1 - wx)
                        gx[b, ch, y0[i], x1[j]] += g * (1 - wy) * wx
                        gx[b, ch, y1[i], x0[j]] += g * wy * (1 - wx)
                        gx[b, ch, y1[i], x1[j]] += g * wy * wx
    return gx_arr
