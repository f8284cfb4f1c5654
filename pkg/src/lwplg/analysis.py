"""Parameter and FLOP accounting.

Convention: 1 MAC = 1 FLOP. Convolutions (including every 1x1 projection),
attention score/value products and the classifier are counted;
normalisation, activations, pooling, resizing and elementwise ops are not.
"""
from __future__ import annotations

import csv
import io
import math
import os
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import ModelConfig, branch_channels

CONVENTION = "1 MAC = 1 FLOP; norms, activations, pooling and elementwise ops excluded"
CSV_HEADER = ("size", "total_gflops", "local_attn_gflops", "global_attn_gflops", "conv_gflops")


# -- parameters -----------------------------------------------------------------------

@dataclass
class ParamReport:
    rows: list[tuple[str, tuple[int, ...], int]]
    by_group: dict[str, int]
    total: int

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "groups": dict(self.by_group),
            "rows": [{"name": n, "shape": list(s), "count": c} for n, s, c in self.rows],
        }


def _group_of(name: str) -> str:
    parts = name.split("/")
    if parts[0] == "stages" and len(parts) > 1:
        return f"stage{int(parts[1]) + 1}"
    return parts[0]


def count_params(network) -> ParamReport:
    """Exact element count of every learned tensor in a built module tree."""
    rows = []
    groups: dict[str, int] = OrderedDict()
    for name, p in network.named_parameters():
        n = int(p.data.size)
        rows.append((name, tuple(p.shape), n))
        g = _group_of(name)
        groups[g] = groups.get(g, 0) + n
    return ParamReport(rows, groups, sum(r[2] for r in rows))


def _conv_params(c_in: int, c_out: int, k: int, groups: int = 1, bias: bool = True) -> int:
    return c_out * (c_in // groups) * k * k + (c_out if bias else 0)


def se_params(c: int, reduction_den: int) -> int:
    r = c // reduction_den
    return _conv_params(c, r, 1) + _conv_params(r, c, 1)


def lw_embed_params(c_in: int, c_out: int) -> int:
    return (_conv_params(c_in, c_in, 3, groups=c_in) + se_params(c_in, 8) + _conv_params(c_in, c_in, 1)
            + _conv_params(c_in, c_out, 1) + _conv_params(c_out, c_out, 3, groups=c_out) + 2 * c_out)


def baseline_embed_params(c_in: int, c_out: int) -> int:
    return (_conv_params(c_in, c_in, 3, groups=c_in) + se_params(c_in, 4) + _conv_params(c_in, c_in, 1)
            + _conv_params(c_in, c_out, 3) + 2 * c_out)


def ffn_params(c: int, alpha: int, kind: str) -> int:
    h = alpha * c
    base = _conv_params(c, h, 1) + _conv_params(h, h, 3, groups=h)
    if kind == "plus":
        return base + 2 * h + _conv_params(2 * h, c, 1)
    return base + _conv_params(h, c, 1)


def block_params(c: int, lsa, gsa, alpha: int, ffn: str) -> int:
    c_l, c_g = branch_channels(c, lsa, gsa)
    attn = _conv_params(c_l, 3 * c_l, 1, bias=False) + _conv_params(c, c, 1)
    if gsa is not None and c_g:
        attn += _conv_params(c_g, 3 * c_g, 1, bias=False)
    return 4 * c + attn + ffn_params(c, alpha, ffn)


def analytic_params(cfg: ModelConfig) -> dict[str, int]:
    """Parameter counts per group derived from the configuration alone."""
    out: dict[str, int] = OrderedDict()
    c1 = cfg.stem_channels
    out["stem"] = _conv_params(cfg.img_channels, c1 // 2, 3) + _conv_params(c1 // 2, c1, 3) + 2 * c1
    prev = c1
    embed = lw_embed_params if cfg.embed == "lw" else baseline_embed_params
    for i, st in enumerate(cfg.stages):
        n = embed(prev, st.channels) if st.downsample_in else 0
        n += st.repeats * block_params(st.channels, st.lsa, st.gsa, cfg.ffn_alpha, cfg.ffn)
        out[f"stage{i + 1}"] = n
        prev = st.channels
    out["expand"] = _conv_params(prev, cfg.expansion_channels, 3) + 2 * cfg.expansion_channels
    out["head"] = cfg.expansion_channels * cfg.num_classes + cfg.num_classes
    out["total"] = sum(out.values())
    return out


def compare_patch_embed_params(c_in: int, c_out: int) -> tuple[int, int, float]:
    """(baseline count, light-weight count, fraction of baseline saved)."""
    if c_in < 8 or c_out < 8:
        raise ValueError("patch-embed comparison needs c_in, c_out >= 8")
    base = baseline_embed_params(c_in, c_out)
    lw = lw_embed_params(c_in, c_out)
    return base, lw, 1.0 - lw / base


# -- FLOPs --------------------------------------------------------------------------

@dataclass
class FlopReport:
    rows: list[tuple[str, tuple[int, int], int, str]] = field(default_factory=list)
    convention: str = CONVENTION

    def add(self, path: str, res: tuple[int, int], macs: int, kind: str = "conv") -> None:
        self.rows.append((path, res, int(macs), kind))

    @property
    def total(self) -> int:
        return sum(r[2] for r in self.rows)

    def by_kind(self, kind: str) -> int:
        return sum(r[2] for r in self.rows if r[3] == kind)

    def by_prefix(self, prefix: str) -> int:
        return sum(r[2] for r in self.rows if r[0].startswith(prefix))

    def as_dict(self) -> dict:
        return {
            "convention": self.convention,
            "total_macs": self.total,
            "total_gflops": self.total / 1e9,
            "rows": [{"name": p, "resolution": list(r), "macs": m, "kind": k} for p, r, m, k in self.rows],
        }


def _out(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def _conv(rep: FlopReport, path: str, h: int, w: int, c_in: int, c_out: int, k: int,
          stride: int = 1, groups: int = 1) -> tuple[int, int]:
    pad = k // 2
    oh, ow = _out(h, k, stride, pad), _out(w, k, stride, pad)
    rep.add(path, (h, w), oh * ow * k * k * (c_in // groups) * c_out)
    return oh, ow


def _embed_flops(rep, path, h, w, c_in, c_out, kind):
    _conv(rep, f"{path}/dw1" if kind == "lw" else f"{path}/dw", h, w, c_in, c_in, 3, groups=c_in)
    r = c_in // (8 if kind == "lw" else 4)
    rep.add(f"{path}/se", (1, 1), 2 * c_in * r)
    if kind == "lw":
        _conv(rep, f"{path}/pw1", h, w, c_in, c_in, 1)
        oh, ow = _conv(rep, f"{path}/pw2", h, w, c_in, c_out, 1, stride=2)
        _conv(rep, f"{path}/dw2", oh, ow, c_out, c_out, 3, groups=c_out)
    else:
        _conv(rep, f"{path}/pw", h, w, c_in, c_in, 1)
        oh, ow = _conv(rep, f"{path}/sconv", h, w, c_in, c_out, 3, stride=2)
    return oh, ow


def _attention_flops(rep, path, h, w, c, lsa, gsa, naive_global):
    c_l, c_g = branch_channels(c, lsa, gsa)
    win = lsa.window
    hp, wp = math.ceil(h / win) * win, math.ceil(w / win) * win
    rep.add(f"{path}/local/qkv", (hp, wp), hp * wp * c_l * 3 * c_l)
    # per window: scores t*t*c_l, values t*t*c_l; summed over windows = hp*wp*t*c_l each
    t = win * win
    rep.add(f"{path}/local/attn", (hp, wp), 2 * hp * wp * t * c_l, "local_attn")
    if gsa is not None and c_g:
        tokens = h * w if naive_global else gsa.window ** 2
        rep.add(f"{path}/global/qkv", (h, w), tokens * c_g * 3 * c_g)
        rep.add(f"{path}/global/attn", (h, w), 2 * tokens * tokens * c_g, "global_attn")
    rep.add(f"{path}/proj", (h, w), h * w * c * c)


def _ffn_flops(rep, path, h, w, c, alpha, kind):
    hid = alpha * c
    _conv(rep, f"{path}/fc1", h, w, c, hid, 1)
    _conv(rep, f"{path}/dw", h, w, hid, hid, 3, groups=hid)
    _conv(rep, f"{path}/fc2", h, w, 2 * hid if kind == "plus" else hid, c, 1)


def count_flops(cfg: ModelConfig, h: int, w: int | None = None, naive_global: bool = False) -> FlopReport:
    """Analytic MAC count for one image of size h x w.

    With ``naive_global`` the global branch attends over every token instead
    of the pooled grid (a quadratic-cost reference, not a real variant).
    """
    w = h if w is None else w
    rep = FlopReport()
    c1 = cfg.stem_channels
    sh, sw = _conv(rep, "stem/conv1", h, w, cfg.img_channels, c1 // 2, 3, stride=2)
    sh, sw = _conv(rep, "stem/conv2", sh, sw, c1 // 2, c1, 3, stride=2)
    prev = c1
    for i, st in enumerate(cfg.stages):
        base = f"stages/{i}"
        if st.downsample_in:
            sh, sw = _embed_flops(rep, f"{base}/downsample", sh, sw, prev, st.channels, cfg.embed)
        for b in range(st.repeats):
            path = f"{base}/blocks/{b}"
            _attention_flops(rep, f"{path}/attn", sh, sw, st.channels, st.lsa, st.gsa, naive_global)
            _ffn_flops(rep, f"{path}/ffn", sh, sw, st.channels, cfg.ffn_alpha, cfg.ffn)
        prev = st.channels
    _conv(rep, "expand/conv", sh, sw, prev, cfg.expansion_channels, 3)
    rep.add("head/fc", (1, 1), cfg.expansion_channels * cfg.num_classes)
    return rep


def stage_resolutions(cfg: ModelConfig, h: int, w: int | None = None) -> list[tuple[int, int]]:
    w = h if w is None else w
    sh, sw = _out(_out(h, 3, 2, 1), 3, 2, 1), _out(_out(w, 3, 2, 1), 3, 2, 1)
    out = []
    for st in cfg.stages:
        if st.downsample_in:
            sh, sw = _out(sh, 1, 2, 0), _out(sw, 1, 2, 0)
        out.append((sh, sw))
    return out


# -- sweeps ---------------------------------------------------------------------------

def _sweep_row(args):
    cfg, size, naive = args
    if size < 32:
        raise ValueError(f"sweep sizes must be >= 32, got {size}")
    rep = count_flops(cfg, size, size, naive_global=naive)
    local = rep.by_kind("local_attn")
    glob = rep.by_kind("global_attn")
    return (size, rep.total / 1e9, local / 1e9, glob / 1e9, (rep.total - local - glob) / 1e9)


def resolution_sweep(cfg: ModelConfig, sizes, naive_global: bool = False,
                     workers: int | None = None) -> list[tuple]:
    """One row per square input size: (size, total, local attn, global attn, conv) in GFLOPs.

    The attention columns hold score and value products only; all
    projections, convolutions and the classifier fall in the conv column.
    """
    jobs = [(cfg, int(s), naive_global) for s in sizes]
    if workers is None:
        workers = int(os.environ.get("LWPV_THREADS", "1") or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for size, *vals in rows:
        wr.writerow([size] + [f"{v:.6g}" for v in vals])
    return buf.getvalue()
