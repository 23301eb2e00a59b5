from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dialcart.classifier import (
    FeatureHasher,
    FeatureVector,
    ModelParams,
    TrainConfig,
    TrainingDivergedError,
    TrainingError,
    cross_entropy_loss_and_grad,
    epoch_snapshots,
    featurize,
    featurize_matrix,
    load_checkpoint,
    predict_proba,
    predict_proba_matrix,
    save_checkpoint,
    train,
)

HASHER = FeatureHasher(ngram_min=1, ngram_max=2, dim=64, salt=0)


class TestFeaturize:
    def test_empty_text_zero_vector(self):
        fv = featurize("", HASHER)
        assert fv.weights == {}
        assert not fv.to_dense().any()

    def test_deterministic(self):
        a = featurize("Oh, I get it", HASHER)
        b = featurize("Oh, I get it", HASHER)
        assert a == b

    def test_unigram_order_invariance(self):
        unigram = FeatureHasher(ngram_min=1, ngram_max=1, dim=64, salt=0)
        assert featurize("a b", unigram) == featurize("b a", unigram)

    def test_l2_normalized(self):
        fv = featurize("one two three two", HASHER)
        assert np.linalg.norm(fv.to_dense()) == pytest.approx(1.0)

    def test_case_folding(self):
        assert featurize("Hello World", HASHER) == featurize("hello world", HASHER)

    def test_token_truncation(self):
        short = FeatureHasher(ngram_min=1, ngram_max=1, dim=64, salt=0, max_tokens=3)
        assert featurize("a b c d e f", short) == featurize("a b c", short)

    def test_matrix_rows_match_single(self):
        texts = ["first sample", "second one here"]
        mat = featurize_matrix(texts, HASHER)
        for row, text in zip(mat, texts):
            assert np.allclose(row, featurize(text, HASHER).to_dense())


class TestGradient:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(0)
        eps = 1e-6
        for _ in range(30):
            c = int(rng.integers(2, 5))
            d = int(rng.integers(2, 11))
            n = int(rng.integers(1, 6))
            w = rng.normal(size=(c, d))
            b = rng.normal(size=c)
            x = rng.normal(size=(n, d))
            y = rng.integers(0, c, size=n)
            _, g_w, g_b = cross_entropy_loss_and_grad(w, b, x, y)
            for _ in range(6):
                i, j = int(rng.integers(c)), int(rng.integers(d))
                w_hi, w_lo = w.copy(), w.copy()
                w_hi[i, j] += eps
                w_lo[i, j] -= eps
                hi, _, _ = cross_entropy_loss_and_grad(w_hi, b, x, y)
                lo, _, _ = cross_entropy_loss_and_grad(w_lo, b, x, y)
                numeric = (hi - lo) / (2 * eps)
                denom = max(abs(numeric), abs(g_w[i, j]), 1e-8)
                assert abs(numeric - g_w[i, j]) / denom < 1e-4
            i = int(rng.integers(c))
            b_hi, b_lo = b.copy(), b.copy()
            b_hi[i] += eps
            b_lo[i] -= eps
            hi, _, _ = cross_entropy_loss_and_grad(w, b_hi, x, y)
            lo, _, _ = cross_entropy_loss_and_grad(w, b_lo, x, y)
            numeric = (hi - lo) / (2 * eps)
            denom = max(abs(numeric), abs(g_b[i]), 1e-8)
            assert abs(numeric - g_b[i]) / denom < 1e-4


def _separable_pair():
    x = np.zeros((2, 8))
    x[0, 0] = 1.0
    x[1, 4] = 1.0
    y = np.array([0, 1])
    return x, y


class TestTrain:
    def test_separable_points_reach_high_gold_prob(self):
        x, y = _separable_pair()
        cfg = TrainConfig(epochs=30, batch_size=2, learning_rate=0.1, weight_decay=0.0, seed=0)
        result = train((x, y), cfg, num_classes=2)
        assert result.dynamics.gold_probs[:, -1].min() > 0.9

    def test_dynamics_shape(self):
        x, y = _separable_pair()
        cfg = TrainConfig(epochs=7, batch_size=1, learning_rate=0.05, seed=0)
        result = train((x, y), cfg, num_classes=2)
        assert result.dynamics.gold_probs.shape == (2, 7)
        assert result.dynamics.correct.shape == (2, 7)

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(20, 16))
        y = rng.integers(0, 3, size=20)
        cfg = TrainConfig(epochs=5, batch_size=4, learning_rate=0.05, seed=42)
        a = train((x, y), cfg, num_classes=3)
        b = train((x, y), cfg, num_classes=3)
        assert np.array_equal(a.params.weights, b.params.weights)
        assert np.array_equal(a.params.bias, b.params.bias)
        assert np.array_equal(a.dynamics.gold_probs, b.dynamics.gold_probs)

    def test_empty_training_set(self):
        with pytest.raises(TrainingError):
            train((np.zeros((0, 4)), np.zeros(0, dtype=int)), TrainConfig(), num_classes=2)

    def test_class_index_out_of_range(self):
        x = np.ones((2, 4))
        with pytest.raises(TrainingError):
            train((x, np.array([0, 5])), TrainConfig(), num_classes=2)

    def test_divergence_aborts_with_diagnostic(self):
        x = np.eye(4) * 1e154
        y = np.array([0, 1, 0, 1])
        cfg = TrainConfig(epochs=5, batch_size=4, learning_rate=1e154, weight_decay=0.0, seed=0)
        with pytest.raises(TrainingDivergedError, match="loss"):
            with np.errstate(all="ignore"):
                train((x, y), cfg, num_classes=2)

    def test_loss_non_increasing_at_small_lr(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(12, 6))
        y = rng.integers(0, 3, size=12)
        cfg = TrainConfig(epochs=40, batch_size=12, learning_rate=1e-3, weight_decay=0.0, seed=0)
        result = train((x, y), cfg, num_classes=3)
        losses = []
        for params in result.epoch_params:
            loss, _, _ = cross_entropy_loss_and_grad(params.weights, params.bias, x, y)
            losses.append(loss)
        for earlier, later in zip(losses, losses[1:]):
            assert later <= earlier + 1e-6

    def test_class_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(18, 10))
        y = rng.integers(0, 3, size=18)
        perm = np.array([2, 0, 1])  # class c becomes perm[c]
        cfg = TrainConfig(epochs=6, batch_size=6, learning_rate=0.05, seed=9)
        base = train((x, y), cfg, num_classes=3)
        permuted = train((x, perm[y]), cfg, num_classes=3)
        probe = rng.normal(size=(5, 10))
        p_base = predict_proba_matrix(base.params, probe)
        p_perm = predict_proba_matrix(permuted.params, probe)
        # class c of the base model is class perm[c] of the permuted model
        assert np.allclose(p_base, p_perm[:, perm], atol=1e-10)


class TestPredictProba:
    def test_zero_params_uniform(self):
        params = ModelParams(np.zeros((4, 8)), np.zeros(4))
        fv = featurize("anything goes", FeatureHasher(1, 1, 8, 0))
        assert np.allclose(predict_proba(params, fv), 0.25)

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(3, 8))
        b = rng.normal(size=3)
        fv = featurize("shift invariant check", FeatureHasher(1, 1, 8, 0))
        base = predict_proba(ModelParams(w, b), fv)
        shifted = predict_proba(ModelParams(w, b + 7.5), fv)
        assert np.allclose(base, shifted)

    def test_hand_softmax(self):
        params = ModelParams(np.zeros((2, 4)), np.array([np.log(3.0), 0.0]))
        fv = FeatureVector(weights={}, dim=4)
        assert np.allclose(predict_proba(params, fv), [0.75, 0.25])

    def test_dimension_mismatch(self):
        params = ModelParams(np.zeros((2, 4)), np.zeros(2))
        with pytest.raises(TrainingError):
            predict_proba(params, FeatureVector(weights={0: 1.0}, dim=8))

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=6))
    def test_valid_distribution_for_arbitrary_logits(self, logits):
        c = len(logits)
        params = ModelParams(np.zeros((c, 4)), np.array(logits))
        dist = predict_proba(params, FeatureVector(weights={}, dim=4))
        assert np.all(dist > 0)
        assert np.all(dist < 1 + 1e-12)
        assert dist.sum() == pytest.approx(1.0, abs=1e-6)


class TestSnapshots:
    def _result(self, epochs=6):
        x, y = _separable_pair()
        cfg = TrainConfig(epochs=epochs, batch_size=2, learning_rate=0.05, seed=0)
        return train((x, y), cfg, num_classes=2)

    def test_k_one_is_final(self):
        result = self._result()
        snaps = epoch_snapshots(result, 1)
        assert len(snaps) == 1
        assert np.array_equal(snaps[0].weights, result.params.weights)

    def test_k_equals_epochs(self):
        result = self._result(5)
        assert len(epoch_snapshots(result, 5)) == 5

    def test_last_snapshot_equals_returned_params(self):
        result = self._result(4)
        snaps = epoch_snapshots(result, 3)
        assert np.array_equal(snaps[-1].weights, result.params.weights)
        assert np.array_equal(snaps[-1].bias, result.params.bias)

    def test_k_too_large(self):
        with pytest.raises(TrainingError):
            epoch_snapshots(self._result(3), 4)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        params = ModelParams(rng.normal(size=(3, 16)), rng.normal(size=3), "test-v1")
        snaps = [ModelParams(rng.normal(size=(3, 16)), rng.normal(size=3), "test-v1")]
        path = tmp_path / "model.json"
        save_checkpoint(path, params, FeatureHasher(1, 2, 16, 5), snapshots=snaps)
        loaded, hasher, loaded_snaps = load_checkpoint(path)
        assert np.array_equal(loaded.weights, params.weights)
        assert np.array_equal(loaded.bias, params.bias)
        assert loaded.scheme_version == "test-v1"
        assert hasher == FeatureHasher(1, 2, 16, 5)
        assert len(loaded_snaps) == 1
        assert np.array_equal(loaded_snaps[0].weights, snaps[0].weights)
