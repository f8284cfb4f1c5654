"""Finite-difference verification suite for ops, blocks and the micro model."""
from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import blocks, ops
from .config import AttnSpec, variant_config
from .model import LWPLGViT
from .nn import Module
from .oracle import finite_diff_grad, rel_error
from .tensor import Tensor

EPS = 1e-4
TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    elements: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOL


def _leaf(rng, shape, scale=1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def randomize(module: Module, rng: np.random.Generator, scale: float = 0.3) -> Module:
    """Replace every parameter with f64 noise so that all paths carry signal.

    Matrices and kernels get fan-in scaled normals (unit gain) so activations
    stay O(1) through deep stacks; vectors get ``scale``-sized noise, around
    one for norm gains.
    """
    for name, p in module.named_parameters():
        if p.ndim >= 2:
            fan_in = int(np.prod(p.shape[1:]))
            p.data = rng.standard_normal(p.shape) / np.sqrt(fan_in)
        elif "norm" in name and name.endswith("weight"):
            p.data = 1.0 + scale * rng.standard_normal(p.shape)
        else:
            p.data = scale * rng.standard_normal(p.shape)
        p.zero_grad()
    return module


def _fd_sampled(f, arr: np.ndarray, idx: np.ndarray, eps: float) -> np.ndarray:
    flat = arr.reshape(-1)
    out = np.empty(len(idx))
    for n, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        out[n] = (fp - fm) / (2 * eps)
    return out


def check_gradients(name: str, forward: Callable[[], Tensor], tensors: list[Tensor], rng: np.random.Generator,
                    max_elems: int | None = None, eps: float = EPS, perturb: float = 0.0) -> CheckResult:
    """Compare backward() against central differences for every tensor in ``tensors``.

    The loss is ``sum(out * R)`` with a fixed random ``R`` so that no
    gradient vanishes by symmetry. ``max_elems`` caps the number of
    elements probed per tensor (sampled without replacement). A non-zero
    ``perturb`` shifts the inputs after the analytic pass, which must make
    the check fail.
    """
    t0 = time.perf_counter()
    out0 = forward()
    weights = rng.standard_normal(out0.shape)

    def loss() -> Tensor:
        return ops.sum(forward() * weights)

    for t in tensors:
        t.zero_grad()
    loss().backward()
    analytic = [t.grad.copy() for t in tensors]
    if perturb:
        for t in tensors:
            t.data += perturb

    worst, count = 0.0, 0
    for t, g in zip(tensors, analytic):
        if max_elems is not None and t.size > max_elems:
            idx = np.sort(rng.choice(t.size, size=max_elems, replace=False))
            fd = _fd_sampled(lambda: loss().item(), t.data, idx, eps)
            worst = max(worst, rel_error(g.reshape(-1)[idx], fd))
            count += len(idx)
        else:
            fd = finite_diff_grad(lambda _: loss().item(), t.data, eps)
            worst = max(worst, rel_error(g, fd))
            count += t.size
    if perturb:
        for t in tensors:
            t.data -= perturb
    return CheckResult(name, worst, count, time.perf_counter() - t0)


def _module_check(name, module, x, rng, max_elems=None, perturb=0.0, fn=None):
    params = [p for _, p in module.named_parameters()]
    fwd = (lambda: fn(x)) if fn is not None else (lambda: module(x))
    return check_gradients(name, fwd, [x] + params, rng, max_elems=max_elems, perturb=perturb)


def op_checks(seed: int = 0, perturb: float = 0.0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    res = []
    x = _leaf(rng, (2, 3, 5, 5))
    w = _leaf(rng, (4, 3, 3, 3), 0.5)
    b = _leaf(rng, (4,))
    res.append(check_gradients("conv2d dense 3x3 s2 p1", lambda: ops.conv2d(x, w, b, 2, 1), [x, w, b], rng, perturb=perturb))
    wd = _leaf(rng, (3, 1, 3, 3), 0.5)
    res.append(check_gradients("conv2d depthwise 3x3", lambda: ops.conv2d(x, wd, None, 1, 1, 3), [x, wd], rng, perturb=perturb))
    xg = _leaf(rng, (1, 4, 4, 4))
    wg = _leaf(rng, (6, 2, 3, 3), 0.5)
    res.append(check_gradients("conv2d grouped g=2", lambda: ops.conv2d(xg, wg, None, 1, 0, 2), [xg, wg], rng, perturb=perturb))
    wp = _leaf(rng, (5, 3, 1, 1))
    res.append(check_gradients("conv2d pointwise s2", lambda: ops.conv2d(x, wp, None, 2, 0), [x, wp], rng, perturb=perturb))
    g, be = _leaf(rng, (3,)), _leaf(rng, (3,))
    res.append(check_gradients("layer_norm", lambda: ops.layer_norm(x, g, be, 1e-5), [x, g, be], rng, perturb=perturb))
    for kind in ("silu", "gelu", "sigmoid"):
        res.append(check_gradients(kind, lambda k=kind: ops.activation(x, k), [x], rng, perturb=perturb))
    s = _leaf(rng, (3, 7))
    res.append(check_gradients("softmax", lambda: ops.softmax(s, -1), [s], rng, perturb=perturb))
    a, m = _leaf(rng, (2, 3, 4)), _leaf(rng, (4, 5))
    res.append(check_gradients("matmul batched", lambda: ops.matmul(a, m), [a, m], rng, perturb=perturb))
    xp = _leaf(rng, (1, 2, 7, 6))
    res.append(check_gradients("adaptive_max_pool2d", lambda: ops.adaptive_max_pool2d(xp, 3, 4), [xp], rng, perturb=perturb))
    res.append(check_gradients("adaptive_avg_pool2d", lambda: ops.adaptive_avg_pool2d(xp, 3, 4), [xp], rng, perturb=perturb))
    res.append(check_gradients("bilinear_resize up", lambda: ops.bilinear_resize(xp, 11, 9), [xp], rng, perturb=perturb))
    res.append(check_gradients("bilinear_resize down", lambda: ops.bilinear_resize(xp, 4, 3), [xp], rng, perturb=perturb))
    gg, gb = _leaf(rng, (3,)), _leaf(rng, (3,))
    res.append(check_gradients("grn", lambda: ops.grn(x, gg, gb), [x, gg, gb], rng, perturb=perturb))
    xw = _leaf(rng, (2, 3, 4, 6))
    res.append(check_gradients(
        "window partition/attention/reverse",
        lambda: ops.window_reverse(ops.softmax(ops.window_partition(xw, 2), 1), 2, 2, 4, 6), [xw], rng, perturb=perturb))
    lg = _leaf(rng, (4, 3))
    res.append(check_gradients("cross_entropy", lambda: ops.cross_entropy(lg, [0, 2, 1, 2]), [lg], rng, perturb=perturb))
    return res


def block_checks(seed: int = 0, perturb: float = 0.0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    kw = dict(rng=rng, dtype=np.float64)
    res = []

    def mod(name, module, shape, **extra):
        randomize(module, rng)
        x = _leaf(rng, shape)
        res.append(_module_check(name, module, x, rng, perturb=perturb, **extra))

    mod("se_block 1/8", blocks.SqueezeExcite(8, Fraction(1, 8), **kw), (1, 8, 3, 3))
    mod("conv_stem", blocks.ConvStem(4, **kw), (1, 3, 8, 8))
    mod("lw_patch_embed", blocks.LWPatchEmbed(8, 12, **kw), (1, 8, 5, 5))
    mod("baseline_patch_embed", blocks.BaselinePatchEmbed(8, 12, **kw), (1, 8, 4, 4))
    mod("ccf_ffn_plus", blocks.CCFFFNPlus(4, 3, **kw), (1, 4, 4, 4))
    mod("ccf_ffn_baseline", blocks.CCFFFN(4, 4, **kw), (1, 4, 4, 4))
    mod("local_window_attention (padded)", blocks.LocalWindowAttention(4, 2, 2, **kw), (1, 4, 3, 5))
    mod("global_pooled_attention", blocks.GlobalPooledAttention(4, 2, 1, **kw), (1, 4, 5, 4))
    mod("lw_plg_sa", blocks.LWPLGSelfAttention(6, AttnSpec(2, 1), AttnSpec(3, 2), **kw), (1, 6, 4, 4))
    mod("lw_plg_sa local only", blocks.LWPLGSelfAttention(4, AttnSpec(2, 2), None, **kw), (1, 4, 4, 4))
    mod("transformer_block", blocks.TransformerBlock(6, AttnSpec(2, 1), AttnSpec(2, 2), 3, **kw), (1, 6, 4, 4))
    mod("channel_expansion", blocks.ChannelExpansion(4, 6, **kw), (1, 4, 3, 3))
    return res


def model_checks(seed: int = 0, perturb: float = 0.0, max_elems: int = 4) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    cfg = variant_config("micro", num_classes=2)
    net = randomize(LWPLGViT(cfg, seed, dtype=np.float64), rng)
    x = _leaf(rng, (1, 3, 32, 32))
    return [_module_check("micro model end-to-end (sampled)", net, x, rng, max_elems=max_elems, perturb=perturb)]


SCOPES = {"op": op_checks, "block": block_checks, "model": model_checks}


def run_suite(scope: str = "all", seed: int = 0, perturb: float = 0.0) -> list[CheckResult]:
    names = list(SCOPES) if scope == "all" else [scope]
    out = []
    for n in names:
        out.extend(SCOPES[n](seed, perturb))
    return out
