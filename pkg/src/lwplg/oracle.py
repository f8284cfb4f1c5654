"""Brute-force references for testing.

Everything here is written with explicit Python loops over plain floats and
shares no code with the production kernels. Slow by design: keep inputs to
a few thousand elements.
"""
from __future__ import annotations

import math

import numpy as np


def rel_error(a, b, floor: float = 1e-8) -> float:
    """Largest elementwise ``|a-b| / max(|a|, |b|)``.

    Pairs where both magnitudes are below ``floor`` are compared absolutely:
    they contribute 0 when ``|a-b| <= floor`` and ``inf`` otherwise.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    worst = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        scale = max(abs(x), abs(y))
        diff = abs(x - y)
        if scale < floor:
            err = 0.0 if diff <= floor else math.inf
        else:
            err = diff / scale
        worst = max(worst, err)
    return worst


def naive_matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).tolist()
    b = np.asarray(b, dtype=np.float64).tolist()
    m, k, n = len(a), len(b), len(b[0])
    if len(a[0]) != k:
        raise ValueError("inner dimensions differ")
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return np.array(out)


def naive_softmax_row(row) -> list[float]:
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = 0.0
    for v in e:
        s += v
    return [v / s for v in e]


def naive_attention(q, k, v) -> np.ndarray:
    """row-softmax(q k^T / sqrt(dim)) v for (tokens, dim) inputs."""
    q = np.asarray(q, dtype=np.float64).tolist()
    k = np.asarray(k, dtype=np.float64).tolist()
    v = np.asarray(v, dtype=np.float64).tolist()
    dim = len(q[0])
    scale = 1.0 / math.sqrt(dim)
    out = []
    for qi in q:
        logits = []
        for kj in k:
            s = 0.0
            for t in range(dim):
                s += qi[t] * kj[t]
            logits.append(s * scale)
        p = naive_softmax_row(logits)
        row = [0.0] * len(v[0])
        for pj, vj in zip(p, v):
            for t in range(len(vj)):
                row[t] += pj * vj[t]
        out.append(row)
    return np.array(out)


def _bin_bounds(i: int, n_in: int, n_out: int) -> tuple[int, int]:
    return math.floor(i * n_in / n_out), math.ceil((i + 1) * n_in / n_out)


def naive_adaptive_pool(x, out_h: int, out_w: int, mode: str = "max") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    data = x.tolist()
    out = np.zeros((n, c, out_h, out_w))
    for b in range(n):
        for ch in range(c):
            plane = data[b][ch]
            for i in range(out_h):
                r0, r1 = _bin_bounds(i, h, out_h)
                for j in range(out_w):
                    c0, c1 = _bin_bounds(j, w, out_w)
                    vals = [plane[r][q] for r in range(r0, r1) for q in range(c0, c1)]
                    if mode == "max":
                        out[b, ch, i, j] = max(vals)
                    elif mode == "mean":
                        s = 0.0
                        for v in vals:
                            s += v
                        out[b, ch, i, j] = s / len(vals)
                    else:
                        raise ValueError(f"unknown pool mode {mode!r}")
    return out


def _source(dst: int, n_in: int, n_out: int) -> tuple[int, int, float]:
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    src = min(max(src, 0.0), n_in - 1.0)
    lo = int(math.floor(src))
    hi = min(lo + 1, n_in - 1)
    return lo, hi, src - lo


def naive_bilinear(x, out_h: int, out_w: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    data = x.tolist()
    out = np.zeros((n, c, out_h, out_w))
    for b in range(n):
        for ch in range(c):
            plane = data[b][ch]
            for i in range(out_h):
                y0, y1, fy = _source(i, h, out_h)
                for j in range(out_w):
                    x0, x1, fx = _source(j, w, out_w)
                    top = plane[y0][x0] * (1 - fx) + plane[y0][x1] * fx
                    bot = plane[y1][x0] * (1 - fx) + plane[y1][x1] * fx
                    out[b, ch, i, j] = top * (1 - fy) + bot * fy
    return out


def naive_conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    n, c_in, h, w = x.shape
    c_out, cpg, kh, kw = weight.shape
    og = c_out // groups
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    xs, ws = x.tolist(), weight.tolist()
    out = np.zeros((n, c_out, oh, ow))
    for b in range(n):
        for o in range(c_out):
            g = o // og
            for i in range(oh):
                for j in range(ow):
                    s = 0.0 if bias is None else float(bias[o])
                    for ci in range(cpg):
                        plane = xs[b][g * cpg + ci]
                        for di in range(kh):
                            r = i * stride + di - padding
                            if r < 0 or r >= h:
                                continue
                            for dj in range(kw):
                                q = j * stride + dj - padding
                                if 0 <= q < w:
                                    s += plane[r][q] * ws[o][ci][di][dj]
                    out[b, o, i, j] = s
    return out


def naive_pointwise(x, weight) -> np.ndarray:
    """1x1 projection of an (n, c_in, h, w) map with a (c_out, c_in) matrix."""
    x = np.asarray(x, dtype=np.float64)
    wm = np.asarray(weight, dtype=np.float64).reshape(weight.shape[0], -1).tolist()
    n, c, h, w = x.shape
    xs = x.tolist()
    out = np.zeros((n, len(wm), h, w))
    for b in range(n):
        for o, row in enumerate(wm):
            for i in range(h):
                for j in range(w):
                    s = 0.0
                    for ci in range(c):
                        s += row[ci] * xs[b][ci][i][j]
                    out[b, o, i, j] = s
    return out


def naive_gelu(v: float) -> float:
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def naive_grn(x, gamma, beta, eps: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    out = np.zeros_like(x)
    for b in range(n):
        norms = []
        for ch in range(c):
            s = 0.0
            for v in x[b, ch].ravel().tolist():
                s += v * v
            norms.append(math.sqrt(s))
        mean = sum(norms) / c
        for ch in range(c):
            nx = norms[ch] / (mean + eps)
            for i in range(h):
                for j in range(w):
                    v = float(x[b, ch, i, j])
                    out[b, ch, i, j] = float(gamma[ch]) * v * nx + float(beta[ch]) + v
    return out


def naive_layer_norm_site(vec, gamma, beta, eps: float) -> list[float]:
    c = len(vec)
    mu = sum(vec) / c
    var = sum((v - mu) ** 2 for v in vec) / c
    return [float(g) * (v - mu) / math.sqrt(var + eps) + float(bt) for v, g, bt in zip(vec, gamma, beta)]


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``f(x)`` w.r.t. every element of ``x``.

    ``x`` is perturbed in place one element at a time and restored exactly,
    so ``f`` may close over the same buffer.
    """
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        g[i] = (fp - fm) / (2 * eps)
    return grad
