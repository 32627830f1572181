import numpy as np
import pytest

from hob2srnn import attention, tape
from hob2srnn.errors import ShapeError
from hob2srnn.kernel import SeededRng, finite_diff_grad

from conftest import max_grad_error


def scalar_attention(w=1.0, b=0.0, u=1.0):
    return attention.AttentionParams(W=np.array([[w]]), b=np.array([[b]]), u=np.array([[u]]))


class TestTanhAttention:
    def test_zero_hidden_zero_bias(self):
        p = scalar_attention()
        out = attention.attend_tanh(p, np.zeros((4, 1)))
        assert np.array_equal(out.lambdas, np.zeros(4))
        assert np.array_equal(out.feat, np.zeros(1))

    def test_scalar_hand_evaluation(self):
        # h=1, W=1, b=0, u=1: score=tanh(1); lambda=tanh(score); feat=lambda*h
        p = scalar_attention()
        out = attention.attend_tanh(p, np.array([[1.0]]))
        assert out.scores[0] == pytest.approx(np.tanh(1.0), abs=1e-15)
        assert out.lambdas[0] == pytest.approx(np.tanh(np.tanh(1.0)), abs=1e-15)
        assert out.feat[0] == pytest.approx(np.tanh(np.tanh(1.0)) * 1.0, abs=1e-15)

    def test_zero_u_kills_weights(self):
        p = attention.AttentionParams(W=SeededRng(1).normal(0, 1, (3, 3)),
                                      b=np.zeros((1, 3)), u=np.zeros((3, 1)))
        out = attention.attend_tanh(p, SeededRng(2).normal(0, 1, (5, 3)))
        assert np.array_equal(out.lambdas, np.zeros(5))
        assert np.array_equal(out.feat, np.zeros(3))

    def test_lambda_range_many_random_inputs(self):
        rng = SeededRng(3)
        p = attention.init_params(4, rng)
        for _ in range(200):
            H = rng.normal(0, 5, (7, 4))
            out = attention.attend_tanh(p, H)
            assert np.all(out.lambdas >= -1) and np.all(out.lambdas <= 1)

    def test_feat_is_weighted_sum(self):
        rng = SeededRng(4)
        p = attention.init_params(3, rng)
        H = rng.normal(0, 1, (6, 3))
        out = attention.attend_tanh(p, H)
        assert np.allclose(out.feat, out.lambdas @ H, atol=1e-15)


class TestSoftmaxAttention:
    def test_single_timestep_returns_h1_exactly(self):
        rng = SeededRng(5)
        p = attention.init_params(4, rng)
        h1 = rng.normal(0, 1, (1, 4))
        out = attention.attend_softmax(p, h1)
        assert np.array_equal(out.lambdas, np.array([1.0]))
        assert np.array_equal(out.feat, h1[0])

    def test_equal_scores_uniform(self):
        p = scalar_attention(u=0.0)
        out = attention.attend_softmax(p, SeededRng(6).normal(0, 1, (4, 1)))
        assert np.allclose(out.lambdas, 0.25, atol=1e-15)

    def test_hand_two_scores(self):
        # softmax([1, 0]) = [e/(e+1), 1/(e+1)]
        expected = np.exp(1.0) / (np.exp(1.0) + 1.0)
        lam = tape.row_softmax(tape.constant(np.array([[1.0, 0.0]]))).value[0]
        assert lam[0] == pytest.approx(expected, abs=1e-12)
        assert lam[1] == pytest.approx(1 - expected, abs=1e-12)

    def test_simplex_property(self):
        rng = SeededRng(7)
        p = attention.init_params(3, rng)
        for _ in range(100):
            out = attention.attend_softmax(p, rng.normal(0, 3, (5, 3)))
            assert np.all(out.lambdas >= 0)
            assert abs(out.lambdas.sum() - 1.0) <= 1e-9


class TestNoAttPooling:
    def test_single_row(self):
        H = np.array([[1.0, -2.0]])
        assert np.array_equal(attention.pool_noatt(H), H[0])

    def test_symmetric_rows_cancel(self):
        v = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(attention.pool_noatt(np.vstack([v, -v])), np.zeros(3))

    def test_mean(self):
        H = np.array([[1.0, 3.0], [3.0, 5.0]])
        assert np.array_equal(attention.pool_noatt(H), np.array([2.0, 4.0]))


def test_permutation_equivariance():
    rng = SeededRng(8)
    p = attention.init_params(4, rng)
    H = rng.normal(0, 1, (6, 4))
    perm = rng.permutation(6)
    for fn in (attention.attend_tanh, attention.attend_softmax):
        out = fn(p, H)
        out_p = fn(p, H[perm])
        assert np.allclose(out_p.scores, out.scores[perm], atol=1e-12)
        assert np.allclose(out_p.lambdas, out.lambdas[perm], atol=1e-12)
        assert np.allclose(out_p.feat, out.feat, atol=1e-12)


def test_shape_mismatch():
    p = attention.init_params(4, SeededRng(9))
    with pytest.raises(ShapeError):
        attention.attend_tanh(p, np.zeros((3, 5)))


@pytest.mark.parametrize("mode", ["tanh", "softmax"])
def test_gradients_match_finite_differences(mode):
    rng = SeededRng(10)
    params = attention.init_params(3, rng)
    H = rng.normal(0, 1, (5, 3))
    proj = rng.normal(0, 1, (3, 1))
    arrays = attention.named_arrays(params, "a")
    fn = attention.attend_tanh_t if mode == "tanh" else attention.attend_softmax_t

    def build():
        pt = attention.tensorize(params)
        hs = [tape.constant(H[i : i + 1]) for i in range(H.shape[0])]
        _, _, feat = fn(pt, hs)
        return tape.sum_all(tape.tanh(tape.matmul(feat, tape.constant(proj)))), pt

    loss, pt = build()
    tape.backward(loss)
    analytic = {f"a.{k}": getattr(pt, k).grad for k in ("W", "b", "u")}
    analytic = {k: (v if v is not None else np.zeros_like(arrays[k])) for k, v in analytic.items()}
    numeric = finite_diff_grad(lambda: build()[0].value[0, 0], arrays)
    assert max_grad_error(analytic, numeric) < 1e-4


def test_batched_and_single_sample_paths_agree():
    rng = SeededRng(11)
    p = attention.init_params(4, rng)
    H = rng.normal(0, 1, (6, 4))
    pt = attention.tensorize(p)
    hs = [tape.constant(H[i : i + 1]) for i in range(6)]
    for fn_t, fn in ((attention.attend_tanh_t, attention.attend_tanh),
                     (attention.attend_softmax_t, attention.attend_softmax)):
        scores, lambdas, feat = fn_t(pt, hs)
        out = fn(p, H)
        assert np.allclose(scores.value[0], out.scores, atol=1e-15)
        assert np.allclose(lambdas.value[0], out.lambdas, atol=1e-15)
        assert np.allclose(feat.value[0], out.feat, atol=1e-15)
