"""Network building blocks: embeddings, feed-forward variants and the
parallel local/global attention layer."""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import ops
from .config import AttnSpec, ConfigError, branch_channels
from .nn import GRN, Conv2d, LayerNorm2d, Linear, Module
from .tensor import ShapeError, Tensor


class SqueezeExcite(Module):
    """Channel gate: global mean -> bottleneck -> sigmoid, multiplied into x."""

    def __init__(self, c: int, reduction: Fraction, act: str = "silu", *, rng, dtype=np.float32):
        super().__init__()
        hidden = math.floor(c * Fraction(reduction))
        if hidden < 1:
            raise ConfigError(f"SE reduction {reduction} leaves no channels for C={c}")
        self.act = act
        self.fc1 = Conv2d(c, hidden, 1, rng=rng, dtype=dtype)
        self.fc2 = Conv2d(hidden, c, 1, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        s = ops.adaptive_avg_pool2d(x, 1, 1)
        s = self.fc2(ops.activation(self.fc1(s), self.act))
        return x * ops.sigmoid(s)


class LWPatchEmbed(Module):
    """Light-weight stride-2 embedding.

    ``z = PW(SE(SiLU(DW(x))))``; ``out = LN(DW(PW_s2(z + x)))``. The 1x1
    projection carries both the stride and the channel change.
    """

    def __init__(self, c_in: int, c_out: int, *, rng, dtype=np.float32):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.dw1 = Conv2d(c_in, c_in, 3, groups=c_in, rng=rng, dtype=dtype)
        self.se = SqueezeExcite(c_in, Fraction(1, 8), "silu", rng=rng, dtype=dtype)
        self.pw1 = Conv2d(c_in, c_in, 1, rng=rng, dtype=dtype)
        self.pw2 = Conv2d(c_in, c_out, 1, stride=2, rng=rng, dtype=dtype)
        self.dw2 = Conv2d(c_out, c_out, 3, groups=c_out, rng=rng, dtype=dtype)
        self.norm = LayerNorm2d(c_out, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        _check_embed_input(x, self.c_in)
        z = self.pw1(self.se(ops.silu(self.dw1(x))))
        return self.norm(self.dw2(self.pw2(z + x)))


class BaselinePatchEmbed(Module):
    """Fused-MBConv style embedding with a dense strided 3x3 projection."""

    def __init__(self, c_in: int, c_out: int, *, rng, dtype=np.float32):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.dw = Conv2d(c_in, c_in, 3, groups=c_in, rng=rng, dtype=dtype)
        self.se = SqueezeExcite(c_in, Fraction(1, 4), "gelu", rng=rng, dtype=dtype)
        self.pw = Conv2d(c_in, c_in, 1, rng=rng, dtype=dtype)
        self.sconv = Conv2d(c_in, c_out, 3, stride=2, rng=rng, dtype=dtype)
        self.norm = LayerNorm2d(c_out, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        _check_embed_input(x, self.c_in)
        z = self.pw(self.se(ops.gelu(self.dw(x))))
        return self.norm(self.sconv(z + x))


def _check_embed_input(x: Tensor, c_in: int) -> None:
    if x.ndim != 4 or x.shape[1] != c_in:
        raise ShapeError(f"patch embed expects {c_in} input channels, got shape {x.shape}")
    if x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeError(f"patch embed needs h, w >= 2, got {x.shape[2]}x{x.shape[3]}")


class CCFFFNPlus(Module):
    """Expand by alpha, depthwise 3x3 + GRN, concatenate with the expansion, project back."""

    def __init__(self, c: int, alpha: int = 3, act: str = "gelu", *, rng, dtype=np.float32):
        super().__init__()
        hidden = alpha * c
        self.act = act
        self.fc1 = Conv2d(c, hidden, 1, rng=rng, dtype=dtype)
        self.dw = Conv2d(hidden, hidden, 3, groups=hidden, rng=rng, dtype=dtype)
        self.grn = GRN(hidden, dtype=dtype)
        self.fc2 = Conv2d(2 * hidden, c, 1, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        e = ops.activation(self.fc1(x), self.act)
        d = self.grn(self.dw(e))
        return self.fc2(ops.concat_channels(e, d))


class CCFFFN(Module):
    """Reference FFN: expand, activation, depthwise 3x3, project back."""

    def __init__(self, c: int, alpha: int = 4, act: str = "gelu", *, rng, dtype=np.float32):
        super().__init__()
        hidden = alpha * c
        self.act = act
        self.fc1 = Conv2d(c, hidden, 1, rng=rng, dtype=dtype)
        self.dw = Conv2d(hidden, hidden, 3, groups=hidden, rng=rng, dtype=dtype)
        self.fc2 = Conv2d(hidden, c, 1, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.dw(ops.activation(self.fc1(x), self.act)))


def multihead_attention(qkv: Tensor, heads: int, record: list | None = None) -> Tensor:
    """Scaled dot-product attention on fused tokens.

    ``qkv`` is (batch, tokens, 3*c) laid out as [q | k | v], each split into
    ``heads`` contiguous groups. Returns (batch, tokens, c).
    """
    b, t, c3 = qkv.shape
    c = c3 // 3
    d = c // heads
    x = ops.transpose(ops.reshape(qkv, (b, t, 3, heads, d)), (2, 0, 3, 1, 4))
    q, k, v = x[0], x[1], x[2]
    scores = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(d))
    if record is not None:
        record.append(scores.shape)
    out = ops.matmul(ops.softmax(scores, axis=-1), v)  # (b, heads, t, d)
    return ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (b, t, c))


class LocalWindowAttention(Module):
    """Self-attention inside non-overlapping win x win tiles.

    Inputs are zero-padded bottom/right to a multiple of the window and
    cropped afterwards; padded tokens take part in attention unmasked.
    """

    def __init__(self, c: int, window: int, heads: int, *, rng, dtype=np.float32):
        super().__init__()
        if c % heads:
            raise ConfigError(f"local branch: {c} channels not divisible by {heads} heads")
        self.c, self.window, self.heads = c, window, heads
        self.qkv = Conv2d(c, 3 * c, 1, bias=False, rng=rng, dtype=dtype)
        self.score_shapes: list | None = None

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        win = self.window
        ph, pw = -h % win, -w % win
        xp = ops.pad2d(x, ph, pw)
        qkv = self.qkv(xp)
        tokens = ops.window_partition(qkv, win)
        y = multihead_attention(tokens, self.heads, self.score_shapes)
        y = ops.window_reverse(y, win, n, h + ph, w + pw)
        if ph or pw:
            y = y[:, :, :h, :w]
        return y


class GlobalPooledAttention(Module):
    """Attention over a fixed g x g grid of max-pooled tokens, resized back to h x w."""

    def __init__(self, c: int, window: int, heads: int, *, rng, dtype=np.float32):
        super().__init__()
        if c % heads:
            raise ConfigError(f"global branch: {c} channels not divisible by {heads} heads")
        self.c, self.window, self.heads = c, window, heads
        self.qkv = Conv2d(c, 3 * c, 1, bias=False, rng=rng, dtype=dtype)
        self.score_shapes: list | None = None

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        g = self.window
        p = ops.adaptive_max_pool2d(x, g, g)
        qkv = self.qkv(p)  # (n, 3c, g, g)
        tokens = ops.transpose(ops.reshape(qkv, (n, 3 * c, g * g)), (0, 2, 1))
        y = multihead_attention(tokens, self.heads, self.score_shapes)
        y = ops.reshape(ops.transpose(y, (0, 2, 1)), (n, c, g, g))
        return ops.bilinear_resize(y, h, w)


class LWPLGSelfAttention(Module):
    """Channel split into a local-window branch and a pooled global branch,
    concatenated and mixed by a shared 1x1 projection."""

    def __init__(self, c: int, lsa: AttnSpec, gsa: AttnSpec | None, r: Fraction | None = None,
                 *, rng, dtype=np.float32):
        super().__init__()
        self.c = c
        self.c_local, self.c_global = branch_channels(c, lsa, gsa, r)
        self.local = LocalWindowAttention(self.c_local, lsa.window, lsa.heads, rng=rng, dtype=dtype)
        self.glob = None
        if gsa is not None and self.c_global > 0:
            self.glob = GlobalPooledAttention(self.c_global, gsa.window, gsa.heads, rng=rng, dtype=dtype)
        self.proj = Conv2d(c, c, 1, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if self.glob is None:
            return self.proj(self.local(x))
        xl, xg = ops.split_channels(x, self.c_local)
        y = ops.concat_channels(self.local(xl), self.glob(xg))
        return self.proj(y)


class TransformerBlock(Module):
    """Pre-norm residual block: attention then feed-forward."""

    def __init__(self, c: int, lsa: AttnSpec, gsa: AttnSpec | None, alpha: int = 3, ffn: str = "plus",
                 r: Fraction | None = None, *, rng, dtype=np.float32):
        super().__init__()
        self.norm1 = LayerNorm2d(c, dtype=dtype)
        self.attn = LWPLGSelfAttention(c, lsa, gsa, r, rng=rng, dtype=dtype)
        self.norm2 = LayerNorm2d(c, dtype=dtype)
        if ffn == "plus":
            self.ffn = CCFFFNPlus(c, alpha, rng=rng, dtype=dtype)
        elif ffn == "baseline":
            self.ffn = CCFFFN(c, alpha, rng=rng, dtype=dtype)
        else:
            raise ConfigError(f"unknown ffn kind {ffn!r}")

    def forward(self, x: Tensor) -> Tensor:
        u = x + self.attn(self.norm1(x))
        return u + self.ffn(self.norm2(u))


class ConvStem(Module):
    """Two overlapping 3x3 stride-2 convolutions (3 -> c/2 -> c), SiLU between, LN after."""

    def __init__(self, c: int, c_img: int = 3, *, rng, dtype=np.float32):
        super().__init__()
        if c % 2:
            raise ConfigError(f"stem width must be even, got {c}")
        self.conv1 = Conv2d(c_img, c // 2, 3, stride=2, rng=rng, dtype=dtype)
        self.conv2 = Conv2d(c // 2, c, 3, stride=2, rng=rng, dtype=dtype)
        self.norm = LayerNorm2d(c, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] < 4 or x.shape[3] < 4:
            raise ShapeError(f"stem needs h, w >= 4, got {x.shape[2]}x{x.shape[3]}")
        return self.norm(self.conv2(ops.silu(self.conv1(x))))


class ChannelExpansion(Module):
    def __init__(self, c_in: int, c_out: int, *, rng, dtype=np.float32):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 3, rng=rng, dtype=dtype)
        self.norm = LayerNorm2d(c_out, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(ops.silu(self.conv(x)))


class ClassifierHead(Module):
    def __init__(self, c: int, num_classes: int, *, rng, dtype=np.float32):
        super().__init__()
        self.fc = Linear(c, num_classes, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc(ops.global_avg_pool(x))
