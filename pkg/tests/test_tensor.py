import numpy as np
import pytest

from milvse.numerics.functional import activation, cosine
from milvse.numerics.tensor import (
    Tensor,
    backward,
    concat,
    frobenius_norm,
    matmul,
    row_softmax,
    stack,
)
from milvse.utils.errors import (
    ContractError,
    DegenerateRowError,
    DegenerateVectorError,
    DimensionError,
)


def test_broadcast_gradients_are_summed_back():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    b = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    grads = backward((x * b + b).sum(), {"x": x, "b": b})
    np.testing.assert_array_equal(grads["x"], np.tile([1.0, 2.0, 3.0], (2, 1)))
    np.testing.assert_array_equal(grads["b"], x.data.sum(axis=0) + 2.0)


def test_matmul_gradients_match_closed_form(rng):
    a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    grads = backward((a @ b).sum(), {"a": a, "b": b})
    np.testing.assert_allclose(grads["a"], np.ones((2, 4)) @ b.data.T)
    np.testing.assert_allclose(grads["b"], a.data.T @ np.ones((2, 4)))


def test_batched_matmul_with_shared_weight(rng):
    w = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    h = Tensor(rng.standard_normal((5, 3, 2)))
    grads = backward((w @ h).sum(), {"w": w})
    expected = sum(np.ones((4, 2)) @ h.data[i].T for i in range(5))
    np.testing.assert_allclose(grads["w"], expected)


def test_matmul_identity_and_worked_example(rng):
    m = rng.standard_normal((3, 3))
    np.testing.assert_array_equal((Tensor(np.eye(3)) @ Tensor(m)).data, m)
    np.testing.assert_array_equal((Tensor(m) @ Tensor(np.eye(3))).data, m)
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    b = Tensor(np.array([[5.0, 6.0], [7.0, 8.0]]))
    np.testing.assert_array_equal((a @ b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_float32_graphs_stay_float32():
    x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    y = (2.0 * x + 1.0).tanh().sum()
    assert y.dtype == np.float32
    grads = backward(y, {"x": x})
    assert grads["x"].dtype == np.float32


def test_backward_needs_scalar_and_zero_fills_unreached():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ContractError):
        backward(x * 2.0)
    grads = backward((x * 2.0).sum(), {"x": x, "unused": unused})
    np.testing.assert_array_equal(grads["unused"], np.zeros(2))


def test_long_chains_do_not_recurse():
    x = Tensor(np.array(1.0), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0
    assert float(backward(y, {"x": x})["x"]) == pytest.approx(1.0)


def test_row_softmax_rows_are_masked_distributions(rng):
    logits = Tensor(rng.standard_normal((3, 5)) * 50)
    mask = np.array([[True] * 5, [True, True, False, False, False], [False, True] * 2 + [True]])
    out = row_softmax(logits, mask).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(out[~mask] == 0.0)
    shifted = row_softmax(Tensor(logits.data + 7.0), mask).data
    np.testing.assert_allclose(shifted, out, atol=1e-12)


def test_row_softmax_rejects_fully_masked_row():
    with pytest.raises(DegenerateRowError):
        row_softmax(Tensor(np.zeros((2, 3))), np.array([[True, True, True], [False] * 3]))


def test_max_routes_gradient_to_first_maximum():
    m = Tensor(np.array([[1.0, 3.0], [3.0, 0.0]]), requires_grad=True)
    out = m.max_trailing(2)
    assert out.item() == 3.0
    grads = backward(out, {"m": m})
    np.testing.assert_array_equal(grads["m"], [[0.0, 1.0], [0.0, 0.0]])


def test_frobenius_norm_gradient_at_zero_is_zero():
    m = Tensor(np.zeros((2, 2)), requires_grad=True)
    grads = backward(frobenius_norm(m), {"m": m})
    np.testing.assert_array_equal(grads["m"], np.zeros((2, 2)))


def test_stack_concat_and_indexing_route_gradients():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    b = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    stacked = stack([a, b], axis=0)
    joined = concat([a, b], axis=0)
    loss = (stacked[1] * 2.0).sum() + joined[np.array([0, 0, 3])].sum()
    grads = backward(loss, {"a": a, "b": b})
    np.testing.assert_array_equal(grads["a"], [2.0, 0.0])
    np.testing.assert_array_equal(grads["b"], [2.0, 3.0])


def test_cosine_is_scale_invariant_and_rejects_zero_vectors(rng):
    u, v = rng.standard_normal(4), rng.standard_normal(4)
    base = cosine(Tensor(u), Tensor(v)).item()
    assert cosine(Tensor(3.0 * u), Tensor(0.2 * v)).item() == pytest.approx(base, abs=1e-12)
    with pytest.raises(DegenerateVectorError):
        cosine(Tensor(np.zeros(4)), Tensor(v))


def test_activation_values_and_unknown_kind():
    assert activation(Tensor(np.array(0.0)), "sigmoid").item() == 0.5
    assert activation(Tensor(np.array(1.0)), "tanh").item() == pytest.approx(0.7616, abs=1e-4)
    assert activation(Tensor(np.array(0.0)), "tanh").item() == 0.0
    with pytest.raises(ContractError):
        activation(Tensor(np.array(0.0)), "relu")
