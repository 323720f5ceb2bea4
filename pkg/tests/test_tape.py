import numpy as np
import pytest

from sdfest.netcore import GradientStateError, Tensor, concat, stack_rows

from gradcheck import assert_grad_close


def test_affine_gradient_wrt_input():
    # loss = sum(W @ x) with W = [[2, 3]] has gradient [2, 3] wrt x
    x = Tensor(np.array([1.0, 1.0]), requires_grad=True)
    W = Tensor(np.array([[2.0, 3.0]]))
    loss = (W @ x).sum()
    loss.backward()
    np.testing.assert_allclose(x.grad, [2.0, 3.0])


def test_relu_at_zero_uses_zero_subgradient():
    x = Tensor(np.array([0.0, -1.0, 2.0]), requires_grad=True)
    loss = x.relu().sum()
    loss.backward()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_reused_node_accumulates_both_paths():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = x * x + x * 2.0  # dy/dx = 2x + 2 = 8
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [8.0])


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_backward_without_graph_raises():
    x = Tensor(np.array(1.0))
    with pytest.raises(GradientStateError):
        x.backward()


def test_broadcast_add_unbroadcasts_gradient():
    a = Tensor(np.zeros((4, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    ((a + b) * 2.0).sum().backward()
    np.testing.assert_allclose(a.grad, np.full((4, 3), 2.0))
    np.testing.assert_allclose(b.grad, np.full(3, 8.0))


def test_broadcast_mul_3d():
    rng = np.random.default_rng(0)
    p = Tensor(rng.normal(size=(5, 4, 1)), requires_grad=False)
    g = Tensor(rng.normal(size=(5, 4, 3)), requires_grad=True)
    (p * g).sum().backward()
    np.testing.assert_allclose(g.grad, np.broadcast_to(p.data, (5, 4, 3)))


@pytest.mark.parametrize("op", ["tanh", "sigmoid", "exp", "abs", "relu"])
def test_elementwise_ops_match_finite_differences(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    v0 = rng.normal(size=12)

    def loss_fn(v):
        t = Tensor(v, requires_grad=True)
        return float((getattr(t, op)() * Tensor(np.arange(1.0, 13.0))).sum().data)

    t = Tensor(v0.copy(), requires_grad=True)
    (getattr(t, op)() * Tensor(np.arange(1.0, 13.0))).sum().backward()
    assert_grad_close(loss_fn, v0, t.grad, rng, n_coords=12)


def test_matmul_matrix_vector_and_mean_match_finite_differences():
    rng = np.random.default_rng(7)
    v0 = rng.normal(size=6)

    def build(v):
        W = Tensor(v.reshape(2, 3), requires_grad=True)
        x = Tensor(np.array([0.5, -1.0, 2.0]))
        y = (W @ x).tanh().mean()
        return W, y

    W, y = build(v0.copy())
    y.backward()

    def loss_fn(v):
        return float(build(v)[1].data)

    assert_grad_close(loss_fn, v0, W.grad.ravel(), rng, n_coords=6)


def test_division_and_power_gradients():
    rng = np.random.default_rng(11)
    v0 = rng.uniform(0.5, 2.0, size=8)

    def build(v):
        t = Tensor(v, requires_grad=True)
        y = ((t**3) / (t + 1.0)).sum()
        return t, y

    t, y = build(v0.copy())
    y.backward()
    assert_grad_close(lambda v: float(build(v)[1].data), v0, t.grad, rng, n_coords=8)


def test_getitem_scatter_gradient():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    (x[0, 1:] * 3.0).sum().backward()
    expected = np.zeros((2, 3))
    expected[0, 1:] = 3.0
    np.testing.assert_allclose(x.grad, expected)


def test_concat_splits_gradient():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 3)), requires_grad=True)
    c = concat([a, b], axis=1)
    (c * Tensor(np.arange(10.0).reshape(2, 5))).sum().backward()
    np.testing.assert_allclose(a.grad, [[0.0, 1.0], [5.0, 6.0]])
    np.testing.assert_allclose(b.grad, [[2.0, 3.0, 4.0], [7.0, 8.0, 9.0]])


def test_stack_rows_gradient():
    rows = [Tensor(np.full(3, float(i)), requires_grad=True) for i in range(4)]
    stacked = stack_rows(rows)
    (stacked * 2.0).sum(axis=1).sum().backward()
    for r in rows:
        np.testing.assert_allclose(r.grad, [2.0, 2.0, 2.0])


def test_sum_axis_keepdims_gradient():
    x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    y = x.sum(axis=1, keepdims=True)  # (3, 1)
    (y * Tensor(np.array([[1.0], [2.0], [3.0]]))).sum().backward()
    np.testing.assert_allclose(x.grad, np.repeat([[1.0], [2.0], [3.0]], 4, axis=1))


def test_deep_chain_does_not_recurse():
    # 2000 sequential ops exercise the iterative topological sort
    x = Tensor(np.array([0.1]), requires_grad=True)
    y = x
    for _ in range(2000):
        y = y * 1.0001
    y.sum().backward()
    assert np.isfinite(x.grad[0])
