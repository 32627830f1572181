import numpy as np
import pytest

from hob2srnn.errors import InputError, ShapeError, StateError
from hob2srnn.kernel import SeededRng
from hob2srnn.model import (
    Hob2srnnModel,
    ModelConfig,
    combine_scores,
    load_checkpoint,
    loss_total,
    save_checkpoint,
)

from conftest import check_model_gradients, small_batch, small_model


class TestLossTotal:
    def test_zeros(self):
        assert loss_total(0, 0, 0) == 0.0

    def test_unit_weights(self):
        assert loss_total(1, 1, 1) == 2.0

    def test_direct_evaluation(self):
        assert loss_total(0.2, 0.4, 0.6) == pytest.approx(0.9, abs=1e-15)


class TestCombineScores:
    def test_equal_rows_double(self):
        p = np.array([0.2, 0.8])
        combined = combine_scores(p, p, p)
        assert np.allclose(combined, 2 * p, atol=1e-15)
        assert np.argmax(combined) == np.argmax(p)

    def test_weighting(self):
        c = combine_scores(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert np.allclose(c, [0.5, 1.5], atol=1e-15)
        assert np.argmax(c) == 1

    def test_tie_breaks_to_lowest_index(self):
        c = combine_scores(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        assert np.allclose(c, [1.0, 1.0], atol=1e-15)
        assert np.argmax(c) == 0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            combine_scores(np.zeros(2), np.zeros(3), np.zeros(2))


class TestForward:
    def test_zero_weights_give_uniform_and_lnk(self):
        m = small_model()
        for arr in m.parameters().values():
            arr[...] = 0.0
        xr, xo, y = small_batch()
        res = m.forward_batch(xr, xo, y, 0)
        k = 3
        for row in np.vstack([res.scores.score_rad, res.scores.score_opt, res.scores.score_fused]):
            assert np.allclose(row, 1.0 / k, atol=1e-12)
        assert res.breakdown.l_rad == pytest.approx(np.log(k), abs=1e-12)
        assert res.breakdown.l_total == pytest.approx(2 * np.log(k), abs=1e-12)

    def test_loss_weighting_identity(self):
        m = small_model()
        xr, xo, y = small_batch()
        b = m.forward_batch(xr, xo, y, 0).breakdown
        assert abs(b.l_total - (0.5 * b.l_rad + 0.5 * b.l_opt + b.l_fused)) < 1e-12

    def test_loss_matches_probability_recomputation(self):
        # independent oracle: recompute cross-entropy from the emitted probabilities
        m = small_model()
        xr, xo, y = small_batch()
        res = m.forward_batch(xr, xo, y, 0)
        rows = np.arange(len(y))
        for probs, recorded in ((res.scores.score_rad, res.breakdown.l_rad),
                                (res.scores.score_opt, res.breakdown.l_opt),
                                (res.scores.score_fused, res.breakdown.l_fused)):
            oracle = float(-np.log(probs[rows, y]).mean())
            assert abs(oracle - recorded) < 1e-10

    def test_probability_simplex_in_every_mode(self):
        xr, xo, y = small_batch()
        for mode in ("tanh", "softmax", "none"):
            for enrich in (True, False):
                m = small_model(attention_mode=mode, enrich=enrich)
                res = m.forward_batch(xr, xo, y, 0)
                for rowset in (res.scores.score_rad, res.scores.score_opt, res.scores.score_fused):
                    assert np.all(rowset >= 0)
                    assert np.allclose(rowset.sum(axis=1), 1.0, atol=1e-9)
                b = res.breakdown
                assert abs(b.l_total - (0.5 * b.l_rad + 0.5 * b.l_opt + b.l_fused)) < 1e-12
                assert np.allclose(
                    res.scores.score_combined,
                    0.5 * res.scores.score_rad + 0.5 * res.scores.score_opt + res.scores.score_fused,
                    atol=1e-15)

    def test_combined_argmax_invariant_under_common_shift(self):
        m = small_model()
        xr, xo, y = small_batch()
        res = m.forward_batch(xr, xo, y, 0)
        shift = 0.123
        shifted = combine_scores(res.scores.score_rad + shift, res.scores.score_opt + shift,
                                 res.scores.score_fused + shift)
        assert np.array_equal(np.argmax(shifted, axis=1),
                              np.argmax(res.scores.score_combined, axis=1))

    def test_unknown_level(self):
        m = small_model()
        xr, xo, y = small_batch()
        with pytest.raises(InputError):
            m.forward_batch(xr, xo, y, 5)

    def test_label_out_of_range(self):
        m = small_model()
        xr, xo, _ = small_batch()
        with pytest.raises(InputError):
            m.forward_batch(xr, xo, np.array([0, 3]), 0)

    def test_missing_source(self):
        m = small_model()
        xr, xo, y = small_batch()
        with pytest.raises(InputError):
            m.forward_batch(xr, None, y, 0)


class TestSingleSource:
    @pytest.mark.parametrize("source", ["radar", "optical"])
    def test_collapsed_classifier(self, source):
        m = small_model(source=source)
        xr, xo, y = small_batch()
        res = m.forward_batch(xr, xo, y, 0)
        # one classifier: aux slots mirror it and carry no loss weight
        assert res.breakdown.l_rad == 0.0 and res.breakdown.l_opt == 0.0
        assert res.breakdown.l_total == res.breakdown.l_fused
        assert np.array_equal(res.scores.score_rad, res.scores.score_fused)

    def test_radar_gradients(self):
        m = small_model(source="radar")
        xr, xo, y = small_batch()
        assert check_model_gradients(m, xr, xo, y) < 1e-4


class TestPredict:
    def test_untrained_level_raises(self):
        m = small_model()
        xr, xo, _ = small_batch()
        with pytest.raises(StateError):
            m.predict_batch(xr, xo, 0)

    def test_single_class_predicts_zero(self):
        m = small_model(class_counts=(1,))
        m.mark_trained(0)
        xr, xo, _ = small_batch()
        assert np.array_equal(m.predict_batch(xr, xo, 0), np.zeros(2, dtype=int))

    def test_matches_recomputed_argmax(self):
        m = small_model()
        m.mark_trained(0)
        xr, xo, _ = small_batch()
        res = m.forward_batch(xr, xo, None, 0)
        assert np.array_equal(m.predict_batch(xr, xo, 0),
                              np.argmax(res.scores.score_combined, axis=1))


class TestGradients:
    def test_full_model_matches_finite_differences(self):
        m = small_model()
        xr, xo, y = small_batch()
        assert check_model_gradients(m, xr, xo, y) < 1e-4

    @pytest.mark.parametrize("mode", ["softmax", "none"])
    def test_ablated_attention_gradients(self, mode):
        m = small_model(attention_mode=mode)
        xr, xo, y = small_batch()
        assert check_model_gradients(m, xr, xo, y) < 1e-4

    def test_no_enrich_gradients(self):
        m = small_model(enrich=False)
        xr, xo, y = small_batch()
        assert check_model_gradients(m, xr, xo, y) < 1e-4

    def test_gradients_without_labels_raise(self):
        m = small_model()
        xr, xo, _ = small_batch()
        res = m.forward_batch(xr, xo, None, 0)
        with pytest.raises(StateError):
            m.gradients(res)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        m = small_model(class_counts=(2, 3))
        m.mark_trained(0)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(m, path, hierarchy_digest="abc", seed=7)
        loaded, meta, norm = load_checkpoint(path)
        assert norm is None
        assert meta["hierarchy_digest"] == "abc" and meta["seed"] == 7
        assert loaded.trained_levels == {0}
        for name, arr in m.parameters().items():
            assert np.array_equal(arr, loaded.parameters()[name])
        xr, xo, _ = small_batch()
        assert np.array_equal(m.predict_batch(xr, xo, 0), loaded.predict_batch(xr, xo, 0))

    def test_roundtrip_with_norm_stats(self, tmp_path):
        from hob2srnn.data import NormalizationStats

        m = small_model()
        stats = NormalizationStats(minimum=np.arange(7.0), maximum=np.arange(7.0) + 1)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(m, path, norm_stats=stats)
        _, _, loaded = load_checkpoint(path)
        assert np.array_equal(loaded.minimum, stats.minimum)
        assert np.array_equal(loaded.maximum, stats.maximum)
