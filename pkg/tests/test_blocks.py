from fractions import Fraction

import numpy as np
import pytest

from lwplg import blocks, ops
from lwplg.config import AttnSpec, ConfigError
from lwplg.oracle import naive_adaptive_pool, naive_attention, naive_bilinear, naive_pointwise, rel_error
from lwplg.tensor import ShapeError, Tensor
from lwplg.verify import randomize

F64 = dict(dtype=np.float64)


def build(cls, *args, seed=0, **kw):
    rng = np.random.default_rng(seed)
    return randomize(cls(*args, rng=rng, **F64, **kw), rng)


def _heads_attention(qkv_tokens, heads):
    """(t, 3c) fused tokens -> (t, c) via per-head naive attention."""
    c = qkv_tokens.shape[1] // 3
    d = c // heads
    q, k, v = qkv_tokens[:, :c], qkv_tokens[:, c:2 * c], qkv_tokens[:, 2 * c:]
    return np.concatenate([naive_attention(q[:, h * d:(h + 1) * d], k[:, h * d:(h + 1) * d], v[:, h * d:(h + 1) * d])
                           for h in range(heads)], axis=1)


@pytest.mark.parametrize("h,w,win,heads", [(4, 4, 2, 1), (5, 3, 2, 2), (7, 7, 7, 2), (3, 8, 4, 1)])
def test_local_attention_equals_per_window_oracle(rng, h, w, win, heads):
    c = 4
    mod = build(blocks.LocalWindowAttention, c, win, heads)
    x = rng.standard_normal((1, c, h, w))
    got = mod(Tensor(x)).data
    hp, wp = -(-h // win) * win, -(-w // win) * win
    xp = np.zeros((1, c, hp, wp))
    xp[:, :, :h, :w] = x
    qkv = naive_pointwise(xp, mod.qkv.weight.data)[0]
    want = np.zeros((c, hp, wp))
    for i in range(0, hp, win):
        for j in range(0, wp, win):
            tok = qkv[:, i:i + win, j:j + win].reshape(3 * c, -1).T
            want[:, i:i + win, j:j + win] = _heads_attention(tok, heads).T.reshape(c, win, win)
    assert rel_error(got[0], want[:, :h, :w]) <= 1e-6


@pytest.mark.parametrize("h,w,g,heads", [(5, 4, 2, 1), (8, 8, 3, 2), (3, 3, 4, 2), (14, 9, 7, 1)])
def test_global_attention_equals_composed_oracle(rng, h, w, g, heads):
    c = 4
    mod = build(blocks.GlobalPooledAttention, c, g, heads)
    x = rng.standard_normal((1, c, h, w))
    got = mod(Tensor(x)).data
    pooled = naive_adaptive_pool(x, g, g, "max")
    qkv = naive_pointwise(pooled, mod.qkv.weight.data)[0]
    att = _heads_attention(qkv.reshape(3 * c, -1).T, heads).T.reshape(1, c, g, g)
    assert rel_error(got, naive_bilinear(att, h, w)) <= 1e-6


def test_global_score_shape_independent_of_resolution(rng):
    mod = build(blocks.GlobalPooledAttention, 4, 3, 2)
    for size in (6, 12, 24):
        mod.score_shapes = []
        mod(Tensor(rng.standard_normal((1, 4, size, size))))
        assert mod.score_shapes == [(1, 2, 9, 9)]


def test_local_score_shape_per_window(rng):
    mod = build(blocks.LocalWindowAttention, 4, 2, 2)
    mod.score_shapes = []
    mod(Tensor(rng.standard_normal((1, 4, 4, 6))))
    assert mod.score_shapes == [(6, 2, 4, 4)]


def test_plg_sa_split_and_shapes(rng):
    mod = build(blocks.LWPLGSelfAttention, 12, AttnSpec(2, 1), AttnSpec(3, 2))
    assert (mod.c_local, mod.c_global) == (4, 8)
    out = mod(Tensor(rng.standard_normal((2, 12, 5, 6))))
    assert out.shape == (2, 12, 5, 6)


def test_plg_sa_without_global_branch():
    mod = build(blocks.LWPLGSelfAttention, 8, AttnSpec(2, 1), None)
    assert mod.glob is None and mod.c_local == 8


def test_plg_sa_rejects_bad_split():
    with pytest.raises(ConfigError):
        build(blocks.LWPLGSelfAttention, 8, AttnSpec(2, 3), AttnSpec(2, 2))


def test_plg_sa_explicit_ratio():
    mod = build(blocks.LWPLGSelfAttention, 12, AttnSpec(2, 1), AttnSpec(2, 1), r=Fraction(1, 3))
    assert (mod.c_local, mod.c_global) == (4, 8)


def _zero_outputs(block):
    for conv in (block.attn.proj, block.ffn.fc2):
        conv.weight.data[...] = 0.0
        conv.bias.data[...] = 0.0


@pytest.mark.parametrize("ffn", ["plus", "baseline"])
def test_zero_projection_block_is_identity(rng, ffn):
    blk = build(blocks.TransformerBlock, 6, AttnSpec(2, 1), AttnSpec(2, 2), 3, ffn)
    _zero_outputs(blk)
    x = rng.standard_normal((1, 6, 5, 4))
    assert np.array_equal(blk(Tensor(x)).data, x)


def test_transformer_block_shape(rng):
    blk = build(blocks.TransformerBlock, 8, AttnSpec(3, 2), AttnSpec(2, 2))
    assert blk(Tensor(rng.standard_normal((2, 8, 7, 5)))).shape == (2, 8, 7, 5)


@pytest.mark.parametrize("cls", [blocks.LWPatchEmbed, blocks.BaselinePatchEmbed])
@pytest.mark.parametrize("h,w", [(8, 8), (7, 5), (2, 2)])
def test_patch_embed_halves_resolution(rng, cls, h, w):
    mod = build(cls, 8, 12)
    out = mod(Tensor(rng.standard_normal((1, 8, h, w))))
    assert out.shape == (1, 12, (h + 1) // 2, (w + 1) // 2)


def test_patch_embed_rejects_wrong_channels(rng):
    mod = build(blocks.LWPatchEmbed, 8, 16)
    with pytest.raises(ShapeError):
        mod(Tensor(rng.standard_normal((1, 4, 8, 8))))


def test_lw_embed_has_no_dense_spatial_conv():
    mod = build(blocks.LWPatchEmbed, 16, 24)
    for name, p in mod.named_parameters():
        if p.ndim == 4 and p.shape[2] > 1:
            assert p.shape[1] == 1, name


def test_se_gate_range(rng):
    mod = build(blocks.SqueezeExcite, 8, Fraction(1, 8))
    x = np.abs(rng.standard_normal((1, 8, 3, 3))) + 0.1
    out = mod(Tensor(x)).data
    assert ((out > 0) & (out < x)).all()


def test_se_too_narrow():
    with pytest.raises(ConfigError):
        build(blocks.SqueezeExcite, 4, Fraction(1, 8))


def test_ccf_ffn_plus_widths():
    mod = build(blocks.CCFFFNPlus, 4, 3)
    assert mod.fc1.weight.shape == (12, 4, 1, 1)
    assert mod.dw.weight.shape == (12, 1, 3, 3)
    assert mod.fc2.weight.shape == (4, 24, 1, 1)


def test_ccf_ffn_plus_zero_grn_reduces_to_concat(rng):
    mod = build(blocks.CCFFFNPlus, 4, 3)
    mod.grn.gamma.data[...] = 0.0
    mod.grn.beta.data[...] = 0.0
    x = Tensor(rng.standard_normal((1, 4, 3, 3)))
    e = ops.gelu(mod.fc1(x))
    want = mod.fc2(ops.concat_channels(e, mod.dw(e))).data
    np.testing.assert_array_equal(mod(x).data, want)


def test_stem_and_expansion_shapes(rng):
    stem = build(blocks.ConvStem, 16)
    assert stem(Tensor(rng.standard_normal((1, 3, 32, 30)))).shape == (1, 16, 8, 8)
    exp = build(blocks.ChannelExpansion, 8, 20)
    assert exp(Tensor(rng.standard_normal((1, 8, 3, 3)))).shape == (1, 20, 3, 3)


def test_attention_bias_layout():
    mod = build(blocks.LWPLGSelfAttention, 8, AttnSpec(2, 1), AttnSpec(2, 1))
    names = dict(mod.named_parameters())
    assert "local/qkv/bias" not in names and "glob/qkv/bias" not in names
    assert "proj/bias" in names
