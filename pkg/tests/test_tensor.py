import numpy as np
import pytest

from lwplg import ops
from lwplg.tensor import ShapeError, Tensor, count_macs, no_grad


def test_fan_out_gradients_accumulate():
    x = Tensor(np.array([2.0, -3.0]), requires_grad=True)
    y = ops.sum(x * x + x * 3.0)
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 3.0)


def test_backward_twice_accumulates_until_reset():
    x = Tensor(np.ones(3), requires_grad=True)
    ops.sum(x * 2.0).backward()
    ops.sum(x * 2.0).backward()
    np.testing.assert_array_equal(x.grad, [4.0, 4.0, 4.0])
    x.zero_grad()
    np.testing.assert_array_equal(x.grad, 0.0)


def test_backward_needs_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_deep_chain_does_not_recurse():
    x = Tensor(np.array(1.0), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0
    y.backward()
    assert x.grad == 1.0


def test_no_grad_builds_no_tape():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._parents == ()


def test_broadcast_add_reduces_gradient():
    a = Tensor(np.zeros((2, 3, 4)), requires_grad=True)
    b = Tensor(np.zeros((3, 1)), requires_grad=True)
    ops.sum(a + b).backward()
    np.testing.assert_array_equal(b.grad, np.full((3, 1), 8.0))


def test_mac_counter(rng):
    x = Tensor(rng.standard_normal((1, 4, 6, 6)))
    w = Tensor(rng.standard_normal((8, 4, 3, 3)))
    a, b = Tensor(rng.standard_normal((5, 7))), Tensor(rng.standard_normal((7, 2)))
    with count_macs() as tally:
        ops.conv2d(x, w, None, 2, 1)
        ops.matmul(a, b)
    assert tally[0] == 3 * 3 * 9 * 4 * 8 + 5 * 7 * 2


def test_dtype_preserved():
    x = Tensor(np.ones(3, dtype=np.float32))
    assert (x * 2.0).dtype == np.float32
    assert Tensor([1, 2]).dtype == np.float64
