"""MLP engine: training behavior, probabilistic outputs, gradient oracle."""
import numpy as np
import pytest

from hierdecomp import mlp
from hierdecomp.mlp import MLPConfig, TrainSpec


def blobs_2class(n_per_class: int = 100, seed: int = 42):
    rng = np.random.default_rng(seed)
    x = np.vstack(
        [rng.normal([0, 0], 1.0, (n_per_class, 2)), rng.normal([4, 4], 1.0, (n_per_class, 2))]
    )
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return x, y


def xor_clusters(n_per_cluster: int = 80, seed: int = 7):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for cx, cy, label in [(0, 0, 0), (3, 0, 1), (0, 3, 1), (3, 3, 0)]:
        xs.append(rng.normal([cx, cy], 0.5, (n_per_cluster, 2)))
        ys += [label] * n_per_cluster
    return np.vstack(xs), np.array(ys)


class TestConfigValidation:
    def test_rejects_zero_dim(self):
        with pytest.raises(ValueError, match="dims"):
            MLPConfig(0, (4,), 2)

    def test_rejects_bad_dropout(self):
        with pytest.raises(ValueError, match="dropout"):
            MLPConfig(2, (4,), 2, dropout_rate=1.0)

    def test_rejects_bad_momentum(self):
        with pytest.raises(ValueError, match="momentum"):
            TrainSpec(momentum=1.0)


class TestTrain:
    def test_separable_blobs(self):
        x, y = blobs_2class()
        model = mlp.train(x, y, MLPConfig(2, (8,), 2), TrainSpec(seed=1))
        assert mlp.evaluate(model, x, y) >= 0.99

    def test_xor_pattern(self):
        x, y = xor_clusters()
        model = mlp.train(x, y, MLPConfig(2, (8,), 2), TrainSpec(seed=5))
        assert mlp.evaluate(model, x, y) >= 0.95

    def test_single_sample_loss_monotone(self):
        x = np.array([[0.5, -1.2, 0.3]])
        spec = TrainSpec(learning_rate=0.1, momentum=0.5, epochs=300, batch_size=1, seed=2)
        model = mlp.train(x, [1], MLPConfig(3, (4,), 2), spec)
        history = model.train_loss_history
        assert all(a >= b - 1e-12 for a, b in zip(history, history[1:]))
        assert history[-1] < 1e-3

    def test_bit_reproducible(self):
        x, y = blobs_2class(40)
        spec = TrainSpec(epochs=5, seed=9)
        a = mlp.train(x, y, MLPConfig(2, (6, 4), 2, dropout_rate=0.2), spec)
        b = mlp.train(x, y, MLPConfig(2, (6, 4), 2, dropout_rate=0.2), spec)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        assert a.train_loss_history == b.train_loss_history

    def test_first_batch_loss_near_log_k(self):
        # one batch per epoch, so epoch 0's recorded loss is the untouched
        # initialization's loss, which should sit near ln(output_dim)
        rng = np.random.default_rng(3)
        x = rng.normal(0, 1, (24, 6))
        y = np.random.default_rng(4).integers(0, 5, 24)
        model = mlp.train(x, y, MLPConfig(6, (10, 8), 5), TrainSpec(epochs=1, batch_size=32, seed=0))
        assert model.train_loss_history[0] == pytest.approx(np.log(5), abs=0.1)

    def test_rejects_label_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            mlp.train(np.zeros((2, 2)), [0, 2], MLPConfig(2, (), 2), TrainSpec())

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            mlp.train(np.array([[np.nan, 0.0]]), [0], MLPConfig(2, (), 2), TrainSpec())

    def test_model_parameters_frozen(self):
        x, y = blobs_2class(10)
        model = mlp.train(x, y, MLPConfig(2, (3,), 2), TrainSpec(epochs=1, seed=0))
        with pytest.raises(ValueError):
            model.weights[0][0, 0] = 1.0


class TestPredictProba:
    def test_rows_sum_to_one(self):
        x, y = blobs_2class(30)
        model = mlp.train(x, y, MLPConfig(2, (5,), 2), TrainSpec(epochs=2, seed=0))
        probs = mlp.predict_proba(model, np.random.default_rng(0).normal(0, 3, (50, 2)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(probs >= 0)

    def test_zero_weight_model_uniform(self):
        model = mlp.MLPModel(
            config=MLPConfig(3, (), 4),
            weights=[np.zeros((3, 4))],
            biases=[np.zeros(4)],
        )
        probs = mlp.predict_proba(model, np.array([[1.0, -2.0, 0.5]]))
        np.testing.assert_allclose(probs, 0.25)

    def test_duplicate_rows_identical(self):
        x, y = blobs_2class(20)
        model = mlp.train(x, y, MLPConfig(2, (4,), 2), TrainSpec(epochs=2, seed=1))
        probe = np.array([[0.3, 1.0], [0.3, 1.0]])
        probs = mlp.predict_proba(model, probe)
        assert np.array_equal(probs[0], probs[1])

    def test_dimension_mismatch(self):
        model = mlp.constant_model(3)
        with pytest.raises(ValueError, match="does not match"):
            mlp.predict_proba(model, np.zeros((1, 4)))


class TestEvaluate:
    def test_matches_training_accuracy(self):
        x, y = blobs_2class(50)
        model = mlp.train(x, y, MLPConfig(2, (8,), 2), TrainSpec(seed=1))
        direct = float(np.mean(np.argmax(mlp.predict_proba(model, x), axis=1) == y))
        assert mlp.evaluate(model, x, y) == direct

    def test_random_model_near_chance(self):
        config = MLPConfig(6, (12,), 4)
        rng = np.random.default_rng(11)
        weights, biases = mlp._init_params(config, rng)
        model = mlp.MLPModel(config=config, weights=weights, biases=biases)
        x = np.random.default_rng(12).normal(0, 1, (8000, 6))
        y = np.tile(np.arange(4), 2000)
        assert mlp.evaluate(model, x, y) == pytest.approx(0.25, abs=0.05)

    def test_empty_set_rejected(self):
        model = mlp.constant_model(2)
        with pytest.raises(ValueError, match="empty"):
            mlp.evaluate(model, np.zeros((0, 2)), [])


class TestGradientCheck:
    def test_random_small_net(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 1, (5, 4))
        y = rng.integers(0, 3, 5)
        err = mlp.gradient_check(MLPConfig(4, (6, 5), 3), x, y, seed=3)
        assert err < 1e-4

    def test_zero_input_batch(self):
        err = mlp.gradient_check(MLPConfig(4, (6,), 3), np.zeros((3, 4)), [0, 1, 2], seed=1)
        assert err < 1e-4

    def test_one_hidden_unit(self):
        rng = np.random.default_rng(0)
        err = mlp.gradient_check(MLPConfig(3, (1,), 2), rng.normal(0, 1, (4, 3)), [0, 1, 0, 1], seed=2)
        assert err < 1e-4

    def test_rejects_dropout(self):
        with pytest.raises(ValueError, match="dropout"):
            mlp.gradient_check(MLPConfig(2, (3,), 2, dropout_rate=0.5), np.zeros((1, 2)), [0])


class TestRegressor:
    def test_fits_linear_map(self):
        rng = np.random.default_rng(8)
        x = rng.normal(0, 1, (200, 3))
        t = x @ np.array([[1.0, -2.0], [0.5, 0.0], [-1.0, 1.0]])
        spec = TrainSpec(learning_rate=0.05, epochs=300, batch_size=32, seed=0)
        model = mlp.train_regressor(x, t, MLPConfig(3, (16,), 2), spec)
        pred = mlp.predict(model, x)
        assert float(np.mean((pred - t) ** 2)) < 0.01

    def test_predict_proba_rejected(self):
        model = mlp.train_regressor(
            np.zeros((4, 2)), np.zeros((4, 1)), MLPConfig(2, (), 1), TrainSpec(epochs=1)
        )
        with pytest.raises(ValueError, match="regression"):
            mlp.predict_proba(model, np.zeros((1, 2)))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        x, y = blobs_2class(20)
        model = mlp.train(x, y, MLPConfig(2, (5, 3), 2), TrainSpec(epochs=3, seed=4))
        path = tmp_path / "model.json"
        mlp.save_model_json(model, path)
        loaded = mlp.load_model_json(path)
        assert loaded.config == model.config
        assert loaded.spec == model.spec
        for a, b in zip(loaded.weights, model.weights):
            assert np.array_equal(a, b)
        probe = np.random.default_rng(1).normal(0, 1, (7, 2))
        assert np.array_equal(
            mlp.predict_proba(loaded, probe), mlp.predict_proba(model, probe)
        )

    def test_constant_model_round_trip(self, tmp_path):
        model = mlp.constant_model(4)
        path = tmp_path / "const.json"
        mlp.save_model_json(model, path)
        loaded = mlp.load_model_json(path)
        assert loaded.seed is None
        np.testing.assert_array_equal(
            mlp.predict_proba(loaded, np.ones((2, 4))), [[1.0], [1.0]]
        )
