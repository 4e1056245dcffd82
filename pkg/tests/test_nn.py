"""Tests for the blob generator, the tanh MLP, training, and the estimator.

The analytic gradient is verified against central finite differences over
the full parameter vector; the loss at zero weights is verified against the
exact uniform-softmax value; training is checked for determinism via the
parameter checksum and for graceful truncation when the iterates blow up.
"""

import math

import numpy as np
import pytest
from sklearn.base import clone

from adaxlab import (
    Dataset,
    MlpClassifier,
    MlpParams,
    NumericsError,
    OptimizerConfig,
    forward_backward,
    init_params,
    make_blobs,
    train,
)


class TestMakeBlobs:
    def test_deterministic_per_seed(self):
        a = make_blobs(seed=7, n=60, d=4, k=3)
        b = make_blobs(seed=7, n=60, d=4, k=3)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_seeds_differ(self):
        a = make_blobs(seed=0, n=60, d=4, k=3)
        b = make_blobs(seed=1, n=60, d=4, k=3)
        assert not np.array_equal(a.features, b.features)

    def test_balanced_counts(self):
        ds = make_blobs(seed=3, n=3000, d=5, k=3)
        assert np.bincount(ds.labels, minlength=3).tolist() == [1000, 1000, 1000]

    def test_remainder_goes_to_low_classes(self):
        ds = make_blobs(seed=3, n=10, d=2, k=3)
        assert sorted(np.bincount(ds.labels, minlength=3).tolist()) == [3, 3, 4]

    def test_shapes_and_split(self):
        ds = make_blobs(seed=5, n=250, d=7, k=4)
        assert ds.features.shape == (250, 7)
        assert ds.labels.shape == (250,)
        assert ds.k == 4
        assert ds.n_train == 200
        Xtr, ytr = ds.train_xy()
        Xte, yte = ds.test_xy()
        assert Xtr.shape == (200, 7) and ytr.shape == (200,)
        assert Xte.shape == (50, 7) and yte.shape == (50,)

    def test_zero_spread_collapses_to_means(self):
        ds = make_blobs(seed=2, n=30, d=6, k=3, spread=0.0)
        for c in range(3):
            rows = ds.features[ds.labels == c]
            assert np.all(rows == rows[0])

    def test_spread_scales_scatter(self):
        tight = make_blobs(seed=2, n=600, d=6, k=3, spread=0.5)
        loose = make_blobs(seed=2, n=600, d=6, k=3, spread=2.0)

        def within_class_std(ds):
            return np.mean(
                [ds.features[ds.labels == c].std(axis=0).mean() for c in range(3)]
            )

        assert within_class_std(loose) > 2.5 * within_class_std(tight)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_blobs(seed=0, n=2, d=2, k=3)
        with pytest.raises(ValueError):
            make_blobs(seed=0, n=10, d=2, k=1)
        with pytest.raises(ValueError):
            make_blobs(seed=0, n=10, d=0, k=2)
        with pytest.raises(ValueError):
            make_blobs(seed=0, n=10, d=2, k=2, spread=-1.0)


class TestDatasetCsv:
    def test_round_trip_bitwise(self, tmp_path):
        ds = make_blobs(seed=11, n=50, d=3, k=3, spread=1.5)
        path = tmp_path / "blobs.csv"
        ds.to_csv(path)
        back = Dataset.from_csv(path)
        assert np.array_equal(ds.features, back.features)
        assert np.array_equal(ds.labels, back.labels)
        assert back.k == ds.k
        assert back.n_train == ds.n_train  # both use the 80% convention

    def test_explicit_n_train(self, tmp_path):
        ds = make_blobs(seed=11, n=50, d=3, k=3)
        path = tmp_path / "blobs.csv"
        ds.to_csv(path)
        back = Dataset.from_csv(path, n_train=17)
        assert back.n_train == 17

    def test_header_format(self, tmp_path):
        ds = make_blobs(seed=1, n=9, d=2, k=3)
        path = tmp_path / "blobs.csv"
        ds.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "f0,f1,label"

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,z\n1,2,0\n")
        with pytest.raises(ValueError):
            Dataset.from_csv(path)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            Dataset(features=np.zeros((4, 2)), labels=np.zeros(3, dtype=int),
                    k=2, n_train=2)
        with pytest.raises(ValueError):
            Dataset(features=np.zeros((4, 2)), labels=np.array([0, 1, 2, 0]),
                    k=2, n_train=2)
        with pytest.raises(ValueError):
            Dataset(features=np.zeros((4, 2)), labels=np.zeros(4, dtype=int),
                    k=2, n_train=5)


class TestMlpParams:
    def test_layout_slices(self):
        d, h, k = 3, 4, 2
        size = d * h + h + h * k + k
        p = MlpParams(d=d, h=h, k=k, flat=np.arange(size, dtype=float))
        assert np.array_equal(p.w1, np.arange(12.0).reshape(3, 4))
        assert np.array_equal(p.b1, np.array([12.0, 13.0, 14.0, 15.0]))
        assert np.array_equal(p.w2, np.arange(16.0, 24.0).reshape(4, 2))
        assert np.array_equal(p.b2, np.array([24.0, 25.0]))

    def test_views_share_memory(self):
        p = MlpParams(d=2, h=2, k=2, flat=np.zeros(12))
        p.w1[0, 0] = 5.0
        assert p.flat[0] == 5.0
        p.flat[-1] = 7.0
        assert p.b2[-1] == 7.0

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            MlpParams(d=2, h=2, k=2, flat=np.zeros(11))


class TestInitParams:
    def test_biases_zero_weights_scaled(self):
        rng = np.random.default_rng(0)
        p = init_params(d=100, h=50, k=10, rng=rng)
        assert np.all(p.b1 == 0.0)
        assert np.all(p.b2 == 0.0)
        assert p.w1.std() == pytest.approx(1.0 / math.sqrt(100), rel=0.1)
        assert p.w2.std() == pytest.approx(1.0 / math.sqrt(50), rel=0.1)

    def test_deterministic_for_same_stream(self):
        a = init_params(3, 4, 2, np.random.default_rng(9))
        b = init_params(3, 4, 2, np.random.default_rng(9))
        assert np.array_equal(a.flat, b.flat)


class TestForwardBackward:
    def test_zero_params_gives_uniform_loss(self):
        p = MlpParams(d=4, h=5, k=3, flat=np.zeros(4 * 5 + 5 + 5 * 3 + 3))
        X = np.random.default_rng(0).standard_normal((8, 4))
        y = np.array([0, 1, 2, 0, 1, 2, 0, 1])
        loss, grads = forward_backward(p, X, y)
        assert loss == pytest.approx(math.log(3), rel=1e-12)
        assert grads.shape == p.flat.shape

    def test_gradient_matches_central_differences(self):
        """Full-vector finite-difference check of the analytic gradient."""
        rng = np.random.default_rng(42)
        d, h, k, B = 4, 6, 3, 5
        p = init_params(d, h, k, rng)
        p.flat[:] += 0.1 * rng.standard_normal(p.flat.shape)
        X = rng.standard_normal((B, d))
        y = rng.integers(0, k, size=B)
        _, grads = forward_backward(p, X, y)
        step = 1e-6
        for i in range(p.flat.size):
            orig = p.flat[i]
            p.flat[i] = orig + step
            up, _ = forward_backward(p, X, y)
            p.flat[i] = orig - step
            dn, _ = forward_backward(p, X, y)
            p.flat[i] = orig
            numeric = (up - dn) / (2.0 * step)
            denom = abs(grads[i]) + abs(numeric) + 1e-8
            assert abs(grads[i] - numeric) / denom <= 1e-5, f"param {i}"

    def test_duplicated_batch_leaves_mean_loss_unchanged(self):
        rng = np.random.default_rng(3)
        p = init_params(3, 4, 2, rng)
        X = rng.standard_normal((6, 3))
        y = rng.integers(0, 2, size=6)
        loss1, g1 = forward_backward(p, X, y)
        loss2, g2 = forward_backward(p, np.vstack([X, X]), np.concatenate([y, y]))
        assert loss2 == pytest.approx(loss1, rel=1e-12)
        np.testing.assert_allclose(g2, g1, rtol=1e-12, atol=1e-15)

    def test_stable_under_large_logits(self):
        p = MlpParams(d=2, h=2, k=2, flat=np.zeros(12))
        p.w2[:] = 400.0  # logits ~ 800: naive exp would overflow
        p.b2[:] = [400.0, -400.0]
        X = np.ones((2, 2))
        y = np.array([0, 1])
        loss, grads = forward_backward(p, X, y)
        assert math.isfinite(loss)
        assert np.all(np.isfinite(grads))

    def test_non_finite_loss_raises(self):
        p = MlpParams(d=2, h=2, k=2, flat=np.zeros(12))
        p.b2[0] = np.inf
        with pytest.raises(NumericsError):
            forward_backward(p, np.ones((1, 2)), np.array([0]))

    def test_batch_validation(self):
        p = MlpParams(d=2, h=2, k=2, flat=np.zeros(12))
        with pytest.raises(ValueError):
            forward_backward(p, np.empty((0, 2)), np.empty(0, dtype=int))
        with pytest.raises(ValueError):
            forward_backward(p, np.ones(2), np.array([0]))
        with pytest.raises(ValueError):
            forward_backward(p, np.ones((2, 2)), np.array([0]))


def small_dataset():
    return make_blobs(seed=0, n=300, d=5, k=3, spread=1.0)


class TestTrain:
    def test_zero_epochs(self):
        ds = small_dataset()
        rep = train(OptimizerConfig(kind="adam"), ds, epochs=0, batch_size=32,
                    seed=0)
        assert rep.iterations == 0
        assert len(rep.epoch_test_loss) == 1
        assert rep.diverged_at is None
        assert len(rep.checksum) == 64

    def test_trace_lengths(self):
        ds = small_dataset()
        rep = train(OptimizerConfig(kind="adam"), ds, epochs=3, batch_size=32,
                    seed=0)
        per_epoch = math.ceil(ds.n_train / 32)
        assert rep.iterations == 3 * per_epoch
        assert len(rep.vhat_avg) == rep.iterations
        assert len(rep.batch_epoch) == rep.iterations
        assert rep.batch_epoch.min() == 1 and rep.batch_epoch.max() == 3
        assert len(rep.epoch_train_loss) == 4  # init eval + one per epoch

    def test_deterministic_checksum(self):
        ds = small_dataset()
        cfg = OptimizerConfig(kind="adax", alpha=1e-3)
        a = train(cfg, ds, epochs=2, batch_size=32, seed=5)
        b = train(cfg, ds, epochs=2, batch_size=32, seed=5)
        assert a.checksum == b.checksum
        assert np.array_equal(a.batch_loss, b.batch_loss)
        assert np.array_equal(a.vhat_avg, b.vhat_avg)

    def test_seed_changes_outcome(self):
        ds = small_dataset()
        cfg = OptimizerConfig(kind="adam")
        a = train(cfg, ds, epochs=1, batch_size=32, seed=0)
        b = train(cfg, ds, epochs=1, batch_size=32, seed=1)
        assert a.checksum != b.checksum

    def test_loss_decreases(self):
        ds = small_dataset()
        rep = train(OptimizerConfig(kind="adam"), ds, epochs=10, batch_size=32,
                    seed=0)
        assert rep.epoch_train_loss[-1] < rep.epoch_train_loss[0]
        assert rep.final_test_acc > 0.8

    def test_divergence_truncates_report(self):
        ds = small_dataset()
        cfg = OptimizerConfig(kind="sgd", alpha=1e308)
        rep = train(cfg, ds, epochs=3, batch_size=32, seed=0)
        assert rep.diverged_at is not None
        assert rep.iterations == rep.diverged_at - 1
        assert len(rep.vhat_avg) == rep.iterations
        assert np.all(np.isfinite(rep.batch_loss))
        assert len(rep.checksum) == 64

    def test_validation(self):
        ds = small_dataset()
        with pytest.raises(ValueError):
            train(OptimizerConfig(kind="adam"), ds, epochs=-1, batch_size=32,
                  seed=0)
        with pytest.raises(ValueError):
            train(OptimizerConfig(kind="adam"), ds, epochs=1, batch_size=0,
                  seed=0)
        with pytest.raises(ValueError):
            train(OptimizerConfig(kind="adam"), ds, epochs=1,
                  batch_size=ds.n_train + 1, seed=0)


class TestMlpClassifier:
    def test_fit_predict_score(self):
        ds = small_dataset()
        clf = MlpClassifier(kind="adam", epochs=10, batch_size=32, seed=0)
        Xtr, ytr = ds.train_xy()
        Xte, yte = ds.test_xy()
        clf.fit(Xtr, ytr)
        assert clf.n_features_in_ == 5
        assert np.array_equal(clf.classes_, np.array([0, 1, 2]))
        pred = clf.predict(Xte)
        assert pred.shape == yte.shape
        assert set(pred.tolist()) <= {0, 1, 2}
        assert clf.score(Xte, yte) >= 0.85
        assert clf.report_.diverged_at is None

    def test_predict_proba_and_decision_function(self):
        ds = small_dataset()
        clf = MlpClassifier(kind="adam", epochs=3, batch_size=32, seed=0)
        clf.fit(*ds.train_xy())
        X = ds.test_xy()[0]
        probs = clf.predict_proba(X)
        scores = clf.decision_function(X)
        assert probs.shape == (X.shape[0], 3)
        assert scores.shape == (X.shape[0], 3)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-12)
        assert np.array_equal(probs.argmax(axis=1), scores.argmax(axis=1))

    def test_noncontiguous_labels_round_trip(self):
        ds = small_dataset()
        X, y = ds.train_xy()
        y_shifted = np.array([3, 9, 17])[y]
        clf = MlpClassifier(kind="adam", epochs=3, batch_size=32, seed=0)
        clf.fit(X, y_shifted)
        assert np.array_equal(clf.classes_, np.array([3, 9, 17]))
        assert set(clf.predict(X).tolist()) <= {3, 9, 17}

    def test_clone_round_trip(self):
        clf = MlpClassifier(kind="adax", alpha=5e-3, epochs=2, seed=4)
        other = clone(clf)
        assert other.get_params() == clf.get_params()

    def test_same_seed_same_model(self):
        ds = small_dataset()
        X, y = ds.train_xy()
        a = MlpClassifier(kind="adam", epochs=2, batch_size=32, seed=1).fit(X, y)
        b = MlpClassifier(kind="adam", epochs=2, batch_size=32, seed=1).fit(X, y)
        assert a.report_.checksum == b.report_.checksum
