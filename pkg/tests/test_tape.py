import numpy as np
import pytest

from hob2srnn import tape
from hob2srnn.errors import ShapeError, StateError
from hob2srnn.kernel import SeededRng, finite_diff_grad

from conftest import max_grad_error


def test_sum_tanh_gradient_at_zero_is_ones():
    x = tape.leaf(np.zeros((2, 3)))
    loss = tape.sum_all(tape.tanh(x))
    tape.backward(loss)
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_constant_loss_zero_gradients():
    x = tape.leaf(np.ones((2, 2)))
    # x participates but the loss path multiplies it by zero
    loss = tape.sum_all(tape.mul_const(x, np.zeros((2, 2))))
    tape.backward(loss)
    assert np.array_equal(x.grad, np.zeros((2, 2)))


def test_backward_without_recorded_graph_raises():
    with pytest.raises(StateError):
        tape.backward(tape.constant(np.zeros((1, 1))))


def test_backward_needs_scalar():
    x = tape.leaf(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        tape.backward(tape.tanh(x))


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        tape.matmul(tape.constant(np.zeros((2, 3))), tape.constant(np.zeros((2, 2))))


def test_grad_accumulates_over_reuse():
    x = tape.leaf(np.array([[2.0]]))
    loss = tape.sum_all(tape.mul(x, x))  # d/dx x^2 = 2x
    tape.backward(loss)
    assert x.grad[0, 0] == pytest.approx(4.0)


def test_composite_graph_matches_finite_differences():
    rng = SeededRng(17)
    arrs = {
        "w": rng.normal(0, 1, (3, 4)),
        "b": rng.normal(0, 1, (1, 4)),
        "u": rng.normal(0, 1, (4, 1)),
    }
    x = rng.normal(0, 1, (5, 3))
    onehot = np.zeros((5, 2))
    onehot[np.arange(5), [0, 1, 1, 0, 1]] = 1.0
    proj = rng.normal(0, 1, (4, 2))

    def build():
        w, b, u = tape.leaf(arrs["w"]), tape.leaf(arrs["b"]), tape.leaf(arrs["u"])
        h = tape.tanh(tape.add(tape.matmul(tape.constant(x), w), b))
        score = tape.sigmoid(tape.matmul(h, u))
        pooled = tape.mul(score, h)
        sm = tape.row_softmax(tape.hstack([tape.col(pooled, j) for j in range(4)]))
        logits = tape.matmul(tape.add(sm, tape.transpose(tape.transpose(pooled))), tape.constant(proj))
        loss, _ = tape.softmax_xent_mean(logits, onehot)
        return loss, (w, b, u)

    loss, leaves = build()
    tape.backward(loss)
    analytic = {k: t.grad for k, t in zip(arrs, leaves)}
    numeric = finite_diff_grad(lambda: build()[0].value[0, 0], arrs)
    assert max_grad_error(analytic, numeric) < 1e-6


def test_softmax_xent_against_direct_recomputation():
    logits = np.array([[1.0, 2.0, -1.0], [0.0, 0.0, 0.0]])
    onehot = np.zeros((2, 3))
    onehot[[0, 1], [1, 2]] = 1.0
    loss, probs = tape.softmax_xent_mean(tape.constant(logits), onehot)
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert np.allclose(probs, p, atol=1e-12)
    expected = -np.log(p[[0, 1], [1, 2]]).mean()
    assert loss.value[0, 0] == pytest.approx(expected, abs=1e-12)


def test_inference_tensors_record_nothing():
    x = tape.constant(np.ones((2, 2)))
    y = tape.tanh(tape.matmul(x, x))
    assert not y.requires_grad and y.parents == ()
