"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes mirror the variant A stage 1 / stage 2 workloads at 224x224 input.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from lwplg import kernels


def cases(rng):
    x = rng.standard_normal((1, 64, 56, 56)).astype(np.float32)
    w_dw = rng.standard_normal((64, 3, 3)).astype(np.float32)
    w_hid = rng.standard_normal((288, 3, 3)).astype(np.float32)
    g_dw = rng.standard_normal((1, 64, 56, 56)).astype(np.float32)
    xh = rng.standard_normal((1, 288, 28, 28)).astype(np.float32)
    g_pool = rng.standard_normal((1, 64, 14, 14)).astype(np.float32)
    _, idx = kernels.adaptive_max_forward(x, 14, 14)
    return {
        "im2col 3x3 s2 (64x56x56)": lambda: kernels.im2col(x, 3, 3, 2, 1),
        "dwconv fwd 3x3 (288x28x28)": lambda: kernels.dwconv_forward(xh, w_hid, 1, 1),
        "dwconv bwd 3x3 (64x56x56)": lambda: kernels.dwconv_backward(g_dw, x, w_dw, 1, 1),
        "adaptive max 56->14": lambda: kernels.adaptive_max_forward(x, 14, 14),
        "adaptive max bwd 14->56": lambda: kernels.adaptive_max_backward(g_pool, idx, 56, 56),
        "bilinear 14->56": lambda: kernels.bilinear_forward(g_pool, 56, 56),
        "bilinear bwd 56->14": lambda: kernels.bilinear_backward(g_dw, 14, 14),
    }


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)
    fns = cases(rng)
    print(f"{'kernel':<28} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in fns.items():
        times = {}
        for backend in ("numpy", "cython"):
            kernels.use_backend(backend)
            fn()
            times[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<28} {times['numpy']:10.3f} {times['cython']:10.3f} {times['numpy'] / times['cython']:7.1f}x")
    kernels.use_backend("cython")


if __name__ == "__main__":
    main()
