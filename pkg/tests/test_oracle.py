import math

import numpy as np
import pytest

from lwplg.oracle import (finite_diff_grad, naive_adaptive_pool, naive_attention, naive_bilinear, naive_conv2d,
                          naive_matmul, naive_softmax_row, rel_error)


def test_rel_error_floor_semantics():
    assert rel_error([1e-9], [5e-9]) == 0.0
    assert rel_error([-9e-9], [9e-9]) == math.inf
    assert rel_error([0.0], [2e-8]) == 1.0
    assert rel_error([1.0, 2.0], [1.0, 2.2]) == pytest.approx(0.2 / 2.2)
    with pytest.raises(ValueError):
        rel_error([1.0], [1.0, 2.0])


def test_finite_diff_on_known_function(rng):
    x = rng.standard_normal((3, 2))
    before = x.copy()
    g = finite_diff_grad(lambda a: float((a ** 3).sum()), x, 1e-4)
    np.testing.assert_allclose(g, 3 * x ** 2, rtol=1e-6, atol=1e-7)
    assert np.array_equal(x, before)


def test_naive_matmul_small():
    np.testing.assert_array_equal(naive_matmul([[1, 2]], [[3], [4]]), [[11.0]])


def test_softmax_row_stable():
    p = naive_softmax_row([1000.0, 1000.0])
    assert p == [0.5, 0.5]


def test_attention_uniform_keys_average_values():
    q = np.ones((2, 4))
    k = np.zeros((3, 4))
    v = np.arange(6.0).reshape(3, 2)
    np.testing.assert_allclose(naive_attention(q, k, v), [[2.0, 3.0], [2.0, 3.0]])


def test_pool_bins_overlap_when_uneven():
    x = np.arange(5.0).reshape(1, 1, 1, 5)
    # bins for 5 -> 3: [0,2), [1,4), [3,5)
    np.testing.assert_array_equal(naive_adaptive_pool(x, 1, 3, "max")[0, 0, 0], [1, 3, 4])
    np.testing.assert_allclose(naive_adaptive_pool(x, 1, 3, "mean")[0, 0, 0], [0.5, 2.0, 3.5])


def test_bilinear_half_pixel_upsample():
    x = np.array([[[[0.0, 1.0]]]])
    np.testing.assert_allclose(naive_bilinear(x, 1, 4)[0, 0, 0], [0.0, 0.25, 0.75, 1.0])


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((1, 2, 4, 4))
    w = np.zeros((2, 2, 3, 3))
    w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
    np.testing.assert_allclose(naive_conv2d(x, w, None, 1, 1), x)
