import numpy as np
import pytest

from aler.mlp import (
    MlpModel,
    SingleClassError,
    ThresholdResult,
    TrainConfig,
    gradient_check,
    optimal_threshold,
    predict_batch,
    train,
)


def separable_fixture(n=200, seed=0):
    """2-D blobs with a wide margin; separability verified by the logistic
    regression oracle in test_fixture_is_separable."""
    rng = np.random.Generator(np.random.PCG64(seed))
    pos = rng.normal(loc=[2.0, 2.0], scale=0.4, size=(n // 2, 2))
    neg = rng.normal(loc=[-2.0, -2.0], scale=0.4, size=(n // 2, 2))
    x = np.vstack([pos, neg])
    y = np.array([1] * (n // 2) + [0] * (n // 2))
    order = rng.permutation(n)
    return x[order], y[order]


def threshold_oracle(probs, labels):
    """Exhaustive scan written independently in precision/recall form."""
    best_theta, best_f1 = None, -1.0
    for theta in sorted(set(float(p) for p in probs), reverse=True):
        tp = fp = fn = 0
        for p, y in zip(probs, labels):
            if p >= theta:
                if y == 1:
                    tp += 1
                else:
                    fp += 1
            elif y == 1:
                fn += 1
        prec = tp / (tp + fp) if (tp + fp) else 0.0
        rec = tp / (tp + fn) if (tp + fn) else 0.0
        f1 = 2 * prec * rec / (prec + rec) if (prec + rec) else 0.0
        if f1 > best_f1:
            best_theta, best_f1 = theta, f1
    return best_theta, best_f1


class TestTrain:
    def test_fixture_is_separable(self):
        from sklearn.linear_model import LogisticRegression

        x, y = separable_fixture()
        oracle = LogisticRegression().fit(x, y)
        assert oracle.score(x, y) == 1.0

    def test_separable_accuracy(self):
        x, y = separable_fixture()
        model = train(x, y, TrainConfig(seed=1))
        acc = np.mean((predict_batch(model, x) >= 0.5) == y)
        assert acc >= 0.95

    def test_single_class_rejected(self):
        x = np.random.default_rng(0).normal(size=(10, 3))
        with pytest.raises(SingleClassError, match="single-class"):
            train(x, np.ones(10), TrainConfig(seed=0))

    def test_bit_identical_for_fixed_seed(self):
        x, y = separable_fixture(n=80, seed=2)
        a = train(x, y, TrainConfig(seed=7, max_epochs=3))
        b = train(x, y, TrainConfig(seed=7, max_epochs=3))
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa, pb)

    def test_zero_learning_rate_leaves_parameters_at_init(self):
        x, y = separable_fixture(n=40, seed=3)
        cfg = TrainConfig(seed=11, learning_rate=0.0, max_epochs=2)
        model = train(x, y, cfg)
        init = MlpModel.initialize(2, seed=11, dropout_rate=cfg.dropout_rate)
        for trained, fresh in zip(model.parameters(), init.parameters()):
            np.testing.assert_array_equal(trained, fresh)

    def test_loss_non_increasing_with_small_lr(self):
        x, y = separable_fixture(n=200, seed=4)
        model = train(x, y, TrainConfig(seed=5, learning_rate=1e-3))
        hist = model.loss_history
        violations = sum(1 for a, b in zip(hist, hist[1:]) if b > a + 1e-12)
        assert violations <= 1

    def test_dim_inconsistency_rejected(self):
        with pytest.raises(ValueError):
            train([[1.0, 2.0], [1.0]], [0, 1], TrainConfig(seed=0))


class TestPredictBatch:
    def test_zero_weight_model_outputs_sigmoid_bias(self):
        model = MlpModel.initialize(4, seed=0)
        for p in model.parameters():
            p[:] = 0.0
        model.b3[:] = 0.3
        probs = predict_batch(model, np.random.default_rng(1).normal(size=(6, 4)))
        np.testing.assert_allclose(probs, 1.0 / (1.0 + np.exp(-0.3)))

    def test_permutation_equivariance(self):
        model = MlpModel.initialize(5, seed=1)
        x = np.random.default_rng(2).normal(size=(30, 5))
        perm = np.random.default_rng(3).permutation(30)
        np.testing.assert_array_equal(predict_batch(model, x)[perm], predict_batch(model, x[perm]))

    def test_batch_matches_single(self):
        model = MlpModel.initialize(6, seed=4)
        x = np.random.default_rng(5).normal(size=(50, 6))
        batched = predict_batch(model, x)
        singles = np.array([predict_batch(model, x[i:i + 1])[0] for i in range(50)])
        np.testing.assert_allclose(batched, singles, atol=1e-9, rtol=0)

    def test_outputs_strictly_inside_unit_interval(self):
        model = MlpModel.initialize(3, seed=6)
        x = np.random.default_rng(7).normal(size=(100, 3)) * 1e4
        probs = predict_batch(model, x)
        assert np.all(probs > 0.0) and np.all(probs < 1.0)

    def test_dim_mismatch(self):
        model = MlpModel.initialize(3, seed=8)
        with pytest.raises(ValueError):
            predict_batch(model, np.ones((2, 4)))


class TestOptimalThreshold:
    def test_perfectly_separated(self):
        result = optimal_threshold([0.1, 0.9], [0, 1])
        assert result == ThresholdResult(0.9, 1.0)

    def test_matches_exhaustive_oracle(self):
        probs = [0.4, 0.6, 0.8]
        labels = [1, 0, 1]
        result = optimal_threshold(probs, labels)
        assert (result.threshold, result.f1_at_threshold) == threshold_oracle(probs, labels)

    def test_all_equal_probs(self):
        result = optimal_threshold([0.5, 0.5, 0.5], [1, 0, 1])
        assert result.threshold == 0.5
        assert result.f1_at_threshold == pytest.approx(2 * 2 / (3 + 2))

    def test_random_sets_match_oracle(self):
        rng = np.random.Generator(np.random.PCG64(9))
        for _ in range(50):
            n = int(rng.integers(2, 40))
            probs = np.round(rng.random(n), 2)
            labels = rng.integers(0, 2, size=n)
            if labels.sum() == 0:
                labels[0] = 1
            got = optimal_threshold(probs, labels)
            want = threshold_oracle(probs, labels)
            assert got.threshold == pytest.approx(want[0])
            assert got.f1_at_threshold == pytest.approx(want[1])

    def test_f1_at_theta_dominates_all_probed_thresholds(self):
        rng = np.random.Generator(np.random.PCG64(10))
        probs = rng.random(60)
        labels = rng.integers(0, 2, size=60)
        labels[0] = 1
        result = optimal_threshold(probs, labels)
        for theta in np.unique(probs):
            pred = probs >= theta
            tp = int(np.sum(pred & (labels == 1)))
            f1 = 0.0 if tp == 0 else 2 * tp / (int(pred.sum()) + int(labels.sum()))
            assert result.f1_at_threshold >= f1 - 1e-12

    def test_no_positive_labels_rejected(self):
        with pytest.raises(ValueError):
            optimal_threshold([0.2, 0.4], [0, 0])


class TestGradients:
    def test_finite_difference_agreement(self):
        model = MlpModel.initialize(8, seed=12)
        feature = np.random.default_rng(13).normal(size=8)
        assert gradient_check(model, feature, 1) <= 1e-4

    def test_doubled_loss_scale_doubles_gradients(self):
        model = MlpModel.initialize(8, seed=14)
        x = np.random.default_rng(15).normal(size=(1, 8))
        y = np.array([1.0])
        _, grads = model.loss_and_gradients(x, y, rng=None, loss_scale=1.0)
        _, doubled = model.loss_and_gradients(x, y, rng=None, loss_scale=2.0)
        for g, d in zip(grads, doubled):
            np.testing.assert_allclose(d, 2.0 * g, rtol=1e-12)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        x, y = separable_fixture(n=60, seed=16)
        model = train(x, y, TrainConfig(seed=17, max_epochs=2))
        path = tmp_path / "model.bin"
        model.save(path)
        again = MlpModel.load(path)
        assert again.input_dim == model.input_dim
        probe = np.random.default_rng(18).normal(size=(10, 2))
        # f32 storage rounds parameters, so compare at that precision
        np.testing.assert_allclose(predict_batch(again, probe), predict_batch(model, probe), atol=1e-5)
