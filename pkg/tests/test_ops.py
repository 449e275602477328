"""Primitive ops: values, dtype discipline, and per-primitive gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemalearn.errors import DimensionError
from hemalearn.nn import GradientTape, Tensor, finite_difference_check, ops
from hemalearn.nn.ops import softmax_rows


def test_softmax_rows_uniform():
    out = softmax_rows(np.array([[0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-12)


def test_softmax_rows_stable_for_large_logits():
    out = softmax_rows(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-12)


def test_softmax_rows_hand_exponentials():
    row = np.log(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_allclose(softmax_rows(row), [[1 / 6, 2 / 6, 3 / 6]], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.lists(st.floats(-50, 50), min_size=2, max_size=6),
        min_size=1,
        max_size=5,
    ).filter(lambda rows: len({len(r) for r in rows}) == 1)
)
def test_softmax_rows_sum_to_one_and_shift_invariant(rows):
    m = np.array(rows, dtype=np.float64)
    out = softmax_rows(m)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
    shifted = softmax_rows(m + 3.7)
    np.testing.assert_allclose(out, shifted, atol=1e-6)


def test_softmax_rows_rejects_non_matrix():
    with pytest.raises(DimensionError):
        softmax_rows(np.zeros(3))


def test_matmul_shape_errors_name_both_shapes():
    a, b = Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2)))
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
        ops.matmul(a, b)


def test_float32_is_preserved_through_op_chains():
    x = Tensor(np.ones((3, 4), dtype=np.float32))
    out = ops.mean(ops.relu(ops.add(ops.mul(x, 2.5), 1)))
    assert out.dtype == np.float32


def test_ops_work_without_an_active_tape():
    x = Tensor(np.array([[1.0, -2.0]]))
    out = ops.relu(x)
    np.testing.assert_array_equal(out.data, [[1.0, 0.0]])


def _check(loss_fn, params, tol=1e-5):
    err = finite_difference_check(loss_fn, params, eps=1e-3, rng=np.random.default_rng(0))
    assert err < tol, f"finite-difference mismatch {err}"


def test_gradient_add_mul_sub_div(rng):
    a = Tensor(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=(3, 4)) + 3.0)  # keep divisor away from 0

    def loss_fn():
        s = ops.add(ops.mul(a, b), ops.sub(a, b))
        return ops.mean(ops.mul(ops.div(s, b), s))

    _check(loss_fn, {"a": a, "b": b})


def test_gradient_broadcast_bias(rng):
    x = Tensor(rng.normal(size=(5, 3)))
    bias = Tensor(rng.normal(size=(3,)))

    def loss_fn():
        return ops.mean(ops.power(ops.add(x, bias), 2.0))

    _check(loss_fn, {"x": x, "bias": bias})


def test_gradient_matmul_2d_and_batched(rng):
    a = Tensor(rng.normal(size=(4, 3)))
    b = Tensor(rng.normal(size=(3, 2)))
    batched = Tensor(rng.normal(size=(2, 3, 4)))

    def loss_2d():
        return ops.mean(ops.mul(ops.matmul(a, b), ops.matmul(a, b)))

    def loss_batched():
        prod = ops.matmul(batched, a)  # (2,3,4)@(4,3) broadcasts over the batch
        return ops.mean(ops.mul(prod, prod))

    _check(loss_2d, {"a": a, "b": b})
    _check(loss_batched, {"batched": batched, "a": a})


def test_gradient_elementwise_nonlinearities(rng):
    x = Tensor(rng.normal(size=(4, 4)) + 2.5)  # positive, away from relu kink and log pole

    for build in (
        lambda: ops.mean(ops.relu(x)),
        lambda: ops.mean(ops.exp(ops.mul(x, 0.3))),
        lambda: ops.mean(ops.log(x)),
        lambda: ops.mean(ops.power(x, 1.5)),
        lambda: ops.mean(ops.sigmoid(x)),
        lambda: ops.mean(ops.softplus(x)),
    ):
        _check(build, {"x": x})


def test_gradient_reductions_and_reshapes(rng):
    x = Tensor(rng.normal(size=(3, 4, 2)))

    def loss_fn():
        summed = ops.sum_(x, axis=1)
        moved = ops.transpose(ops.reshape(summed, (3, 2)), (1, 0))
        return ops.mean(ops.mul(moved, moved))

    _check(loss_fn, {"x": x})


def test_gradient_softmax_and_log_softmax(rng):
    x = Tensor(rng.normal(size=(5, 6)))
    target = np.arange(5) % 6

    def loss_softmax():
        probs = ops.softmax(x, axis=-1)
        return ops.mean(ops.mul(probs, probs))

    def loss_log_softmax():
        lp = ops.log_softmax(x, axis=-1)
        return ops.neg(ops.mean(ops.gather_rows(lp, target)))

    _check(loss_softmax, {"x": x})
    _check(loss_log_softmax, {"x": x})


def test_gradient_take_rows_and_spmm(rng):
    from scipy import sparse

    x = Tensor(rng.normal(size=(6, 3)))
    adj = sparse.random(6, 6, density=0.4, random_state=1, dtype=np.float64)
    adj = (adj + adj.T).tocsr()

    def loss_fn():
        propagated = ops.spmm(adj, x)
        picked = ops.take_rows(propagated, np.array([0, 2, 2, 5]))
        return ops.mean(ops.mul(picked, picked))

    _check(loss_fn, {"x": x})


def test_unbroadcast_sums_to_target_shape(rng):
    g = rng.normal(size=(4, 3, 5))
    out = ops._unbroadcast(g, (3, 5))
    np.testing.assert_allclose(out, g.sum(axis=0))
    out = ops._unbroadcast(g, (4, 1, 5))
    np.testing.assert_allclose(out, g.sum(axis=1, keepdims=True))


def test_tape_records_only_when_active():
    x = Tensor(np.ones((2, 2)))
    with GradientTape() as tape:
        ops.relu(x)
    assert len(tape) == 1
    ops.relu(x)
    assert len(tape) == 1
