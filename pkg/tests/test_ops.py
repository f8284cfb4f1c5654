import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwplg import ops
from lwplg.oracle import (naive_adaptive_pool, naive_bilinear, naive_conv2d, naive_gelu, naive_grn,
                          naive_layer_norm_site, naive_matmul, rel_error)
from lwplg.tensor import ShapeError, Tensor


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


@pytest.mark.parametrize("stride,padding,groups,k", [(1, 1, 1, 3), (2, 1, 1, 3), (1, 0, 2, 3), (2, 0, 1, 1),
                                                     (1, 1, 6, 3), (2, 1, 6, 3)])
def test_conv2d_matches_oracle(rng, stride, padding, groups, k):
    x = rng.standard_normal((2, 6, 7, 5))
    w = rng.standard_normal((6, 6 // groups, k, k))
    b = rng.standard_normal(6)
    got = ops.conv2d(T(x), T(w), T(b), stride, padding, groups).data
    np.testing.assert_allclose(got, naive_conv2d(x, w, b, stride, padding, groups), rtol=1e-12, atol=1e-12)


def test_conv2d_shape_errors(rng):
    x = T(rng.standard_normal((1, 4, 5, 5)))
    with pytest.raises(ShapeError, match="c_in"):
        ops.conv2d(x, T(rng.standard_normal((2, 3, 3, 3))))
    with pytest.raises(ShapeError):
        ops.conv2d(x, T(rng.standard_normal((2, 4, 7, 7))))
    with pytest.raises(ShapeError):
        ops.conv2d(T(np.ones((4, 5, 5))), T(rng.standard_normal((2, 4, 1, 1))))


def test_matmul_matches_oracle(rng):
    a, b = rng.standard_normal((4, 6)), rng.standard_normal((6, 3))
    np.testing.assert_allclose(ops.matmul(T(a), T(b)).data, naive_matmul(a, b), rtol=1e-13)


def test_layer_norm_per_site(rng):
    x = rng.standard_normal((1, 5, 2, 3))
    g, b = rng.standard_normal(5), rng.standard_normal(5)
    out = ops.layer_norm(T(x), T(g), T(b), 1e-5).data
    for i in range(2):
        for j in range(3):
            np.testing.assert_allclose(out[0, :, i, j], naive_layer_norm_site(x[0, :, i, j], g, b, 1e-5), rtol=1e-12)


def test_gelu_exact_erf(rng):
    x = rng.standard_normal(50) * 3
    np.testing.assert_allclose(ops.gelu(T(x)).data, [naive_gelu(v) for v in x], rtol=1e-14)


def test_silu_and_sigmoid_values():
    x = T([-2.0, 0.0, 3.0])
    sig = 1 / (1 + np.exp(-x.data))
    np.testing.assert_allclose(ops.sigmoid(x).data, sig)
    np.testing.assert_allclose(ops.silu(x).data, x.data * sig)


def test_activation_rejects_unknown():
    with pytest.raises(ValueError):
        ops.activation(T([1.0]), "relu6")


def test_grn_matches_oracle(rng):
    x = rng.standard_normal((2, 4, 3, 3))
    g, b = rng.standard_normal(4), rng.standard_normal(4)
    np.testing.assert_allclose(ops.grn(T(x), T(g), T(b)).data, naive_grn(x, g, b), rtol=1e-12)


def test_grn_zero_params_is_identity(rng):
    x = rng.standard_normal((1, 3, 4, 4))
    np.testing.assert_array_equal(ops.grn(T(x), T(np.zeros(3)), T(np.zeros(3))).data, x)


@pytest.mark.parametrize("oh,ow", [(1, 1), (3, 4), (7, 6), (10, 9)])
def test_adaptive_pools_exact(rng, oh, ow):
    x = rng.standard_normal((2, 3, 7, 6))
    assert np.array_equal(ops.adaptive_max_pool2d(T(x), oh, ow).data, naive_adaptive_pool(x, oh, ow, "max"))
    np.testing.assert_allclose(ops.adaptive_avg_pool2d(T(x), oh, ow).data, naive_adaptive_pool(x, oh, ow, "mean"),
                               rtol=1e-12)


def test_adaptive_max_tie_goes_to_first():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    ops.sum(ops.adaptive_max_pool2d(x, 1, 1)).backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])


@pytest.mark.parametrize("oh,ow", [(11, 9), (4, 3), (7, 6), (1, 1), (14, 2)])
def test_bilinear_matches_oracle(rng, oh, ow):
    x = rng.standard_normal((1, 2, 7, 6))
    got = ops.bilinear_resize(T(x), oh, ow).data
    assert rel_error(got, naive_bilinear(x, oh, ow)) <= 1e-12


def test_bilinear_identity_size(rng):
    x = T(rng.standard_normal((1, 2, 5, 5)))
    assert np.array_equal(ops.bilinear_resize(x, 5, 5).data, x.data)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(1, 9), w=st.integers(1, 9), oh=st.integers(1, 16), ow=st.integers(1, 16),
       v=st.floats(-5, 5, allow_nan=False))
def test_bilinear_constant_in_constant_out(h, w, oh, ow, v):
    out = ops.bilinear_resize(T(np.full((1, 1, h, w), v)), oh, ow).data
    np.testing.assert_allclose(out, v, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(1, 9), w=st.integers(1, 9), oh=st.integers(1, 9), ow=st.integers(1, 9))
def test_adaptive_max_bounded_by_input(h, w, oh, ow):
    x = np.random.default_rng(h * 100 + w).standard_normal((1, 2, h, w))
    out = ops.adaptive_max_pool2d(T(x), oh, ow).data
    assert out.max() <= x.max() and out.min() >= x.min()
    assert set(out.ravel()) <= set(x.ravel())


@settings(max_examples=30, deadline=None)
@given(rows=st.integers(1, 5), cols=st.integers(1, 8), scale=st.floats(0.1, 50))
def test_softmax_rows_sum_to_one(rows, cols, scale):
    x = np.random.default_rng(rows * cols).standard_normal((rows, cols)) * scale
    p = ops.softmax(T(x), -1).data
    np.testing.assert_allclose(p.sum(-1), 1.0, rtol=1e-12)
    assert (p >= 0).all()


def test_cross_entropy_value():
    logits = np.array([[2.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
    want = -(math.log(math.exp(2) / (math.exp(2) + 1 + math.exp(-1))) + math.log(1 / 3)) / 2
    assert ops.cross_entropy(T(logits), [0, 1]).item() == pytest.approx(want, rel=1e-13)


def test_split_concat_round_trip_bit_exact(rng):
    x = T(rng.standard_normal((2, 7, 3, 4)))
    a, b = ops.split_channels(x, 3)
    assert a.shape[1] == 3 and b.shape[1] == 4
    assert np.array_equal(ops.concat_channels(a, b).data, x.data)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 2), c=st.integers(1, 4), hw=st.integers(1, 3), ww=st.integers(1, 3), win=st.integers(1, 4))
def test_partition_reverse_round_trip(n, c, hw, ww, win):
    x = np.random.default_rng(0).standard_normal((n, c, hw * win, ww * win))
    tokens = ops.window_partition(T(x), win)
    assert tokens.shape == (n * hw * ww, win * win, c)
    assert np.array_equal(ops.window_reverse(tokens, win, n, hw * win, ww * win).data, x)


def test_window_partition_rejects_ragged(rng):
    with pytest.raises(ShapeError):
        ops.window_partition(T(rng.standard_normal((1, 2, 5, 4))), 2)


def test_window_partition_token_order():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    tokens = ops.window_partition(T(x), 2).data[..., 0]
    np.testing.assert_array_equal(tokens[0], [0, 1, 4, 5])
    np.testing.assert_array_equal(tokens[1], [2, 3, 6, 7])
    np.testing.assert_array_equal(tokens[3], [10, 11, 14, 15])


def test_pad2d_bottom_right():
    x = T(np.ones((1, 1, 2, 2)))
    out = ops.pad2d(x, 1, 2).data
    assert out.shape == (1, 1, 3, 4)
    assert out.sum() == 4 and out[0, 0, :2, :2].sum() == 4


def test_global_avg_pool(rng):
    x = rng.standard_normal((2, 3, 4, 5))
    np.testing.assert_allclose(ops.global_avg_pool(T(x)).data, x.mean(axis=(2, 3)))
