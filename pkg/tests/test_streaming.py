"""Streaming estimator: exactness against batch statistics, order
invariance, memory behavior, and checkpointing."""

import numpy as np
import pytest

from randumb.errors import (
    ConfigurationError,
    DataError,
    InsufficientDataError,
    ModelStateError,
    ShapeError,
)
from randumb.reference import batch_stats
from randumb.streaming import MODE_GLOBAL, MODE_POOLED, StreamingEstimator


def feed(est, X, y):
    for xi, yi in zip(X, y):
        est.observe(xi, yi)
    return est


class TestSingleSamples:
    def test_first_sample_sets_mean_and_zero_scatter(self):
        est = StreamingEstimator(4)
        phi = np.array([1.0, -2.0, 0.5, 3.0])
        est.observe(phi, 0)
        np.testing.assert_array_equal(est.class_means()[0], phi)
        assert est.class_counts() == {0: 1}
        assert not est.scatter().any()

    def test_identical_samples_leave_scatter_zero(self):
        est = StreamingEstimator(3)
        phi = np.array([0.25, 0.5, -1.0])
        est.observe(phi, 2)
        est.observe(phi, 2)
        assert not est.scatter().any()
        np.testing.assert_allclose(est.class_means()[2], phi, atol=1e-15)

    def test_two_point_covariance_closed_form(self):
        v = np.array([1.0, 4.0])
        w = np.array([3.0, 0.0])
        est = feed(StreamingEstimator(2), [v, w], [0, 0])
        np.testing.assert_allclose(
            est.covariance(), 0.5 * np.outer(v - w, v - w), atol=1e-12
        )

    def test_key_set_tracks_observed_labels_only(self):
        est = StreamingEstimator(2)
        est.observe(np.ones(2), 3)
        est.observe(np.zeros(2), 7)
        assert set(est.class_means()) == {3, 7}
        assert est.classes_seen == [3, 7]


class TestBatchEquivalence:
    def test_pooled_matches_batch_oracle(self):
        """500 samples, 5 classes: scatter and means agree with the
        two-pass batch computation to 1e-10 relative."""
        rng = np.random.default_rng(10)
        X = rng.standard_normal((500, 16))
        y = rng.integers(0, 5, size=500)
        est = feed(StreamingEstimator(16), X, y)
        ref = batch_stats(X, y)
        scale = np.abs(ref.scatter).max()
        assert np.abs(est.scatter() - ref.scatter).max() / scale < 1e-10
        for label, mean in est.class_means().items():
            np.testing.assert_allclose(mean, ref.means[label], rtol=1e-12, atol=1e-12)

    def test_global_mode_matches_batch_oracle(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((400, 9))
        y = rng.integers(0, 4, size=400)
        est = feed(StreamingEstimator(9, mode=MODE_GLOBAL), X, y)
        ref = batch_stats(X, y, mode="global")
        np.testing.assert_allclose(est.covariance(), ref.covariance, rtol=1e-10, atol=1e-12)

    def test_class_means_high_count(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((1000, 8))
        y = np.repeat(np.arange(10), 100)
        est = feed(StreamingEstimator(8), X, y)
        ref = batch_stats(X, y)
        for label, mean in est.class_means().items():
            np.testing.assert_allclose(mean, ref.means[label], rtol=1e-12)

    def test_reversed_stream_gives_same_covariance(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((300, 6))
        y = rng.integers(0, 3, size=300)
        fwd = feed(StreamingEstimator(6), X, y).covariance()
        rev = feed(StreamingEstimator(6), X[::-1], y[::-1]).covariance()
        assert np.abs(fwd - rev).max() / np.abs(fwd).max() < 1e-10

    def test_iid_standard_normal_covariance_near_identity(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((10_000, 8))
        y = np.zeros(10_000, dtype=int)
        est = feed(StreamingEstimator(8), X, y)
        assert np.abs(est.covariance() - np.eye(8)).max() < 0.1

    def test_pooled_unbiased_divides_by_n_minus_c(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((60, 5))
        y = rng.integers(0, 4, size=60)
        plain = feed(StreamingEstimator(5), X, y)
        unbiased = feed(StreamingEstimator(5, pooled_unbiased=True), X, y)
        k = len(np.unique(y))
        np.testing.assert_allclose(
            unbiased.covariance(), plain.covariance() * (60 - 1) / (60 - k), rtol=1e-12
        )


class TestNumericalShape:
    def test_scatter_is_exactly_symmetric(self):
        rng = np.random.default_rng(16)
        est = feed(
            StreamingEstimator(7),
            rng.standard_normal((120, 7)),
            rng.integers(0, 3, size=120),
        )
        s = est.scatter()
        assert np.abs(s - s.T).max() == 0.0

    def test_covariance_positive_semidefinite(self):
        rng = np.random.default_rng(17)
        est = feed(
            StreamingEstimator(10),
            rng.standard_normal((200, 10)),
            rng.integers(0, 6, size=200),
        )
        eigs = np.linalg.eigvalsh(est.covariance())
        assert eigs.min() >= -1e-8 * eigs.max()

    def test_dimension_and_finiteness_checks(self):
        est = StreamingEstimator(3)
        with pytest.raises(ShapeError):
            est.observe(np.zeros(4), 0)
        with pytest.raises(DataError):
            est.observe(np.array([1.0, np.inf, 0.0]), 0)

    def test_insufficient_data_errors(self):
        est = StreamingEstimator(3)
        with pytest.raises(InsufficientDataError):
            est.covariance()
        est.observe(np.ones(3), 0)
        with pytest.raises(InsufficientDataError):
            est.covariance()
        # with the (n - C) normalizer, two samples in two classes is too few
        est2 = StreamingEstimator(3, pooled_unbiased=True)
        est2.observe(np.ones(3), 0)
        est2.observe(np.zeros(3), 1)
        with pytest.raises(InsufficientDataError):
            est2.covariance()

    def test_constructor_validation(self):
        with pytest.raises(ConfigurationError):
            StreamingEstimator(0)
        with pytest.raises(ConfigurationError):
            StreamingEstimator(4, mode="diagonal")
        with pytest.raises(ConfigurationError):
            StreamingEstimator(4, mode=MODE_GLOBAL, pooled_unbiased=True)


class TestMemoryContract:
    def test_state_size_constant_after_all_classes_seen(self):
        """State is one E x E accumulator plus C mean vectors: growing
        the stream 100x does not grow the state."""
        rng = np.random.default_rng(18)
        est = StreamingEstimator(12)
        for i in range(50):
            est.observe(rng.standard_normal(12), i % 5)
        size_warm = est.state_nbytes()
        for i in range(5000):
            est.observe(rng.standard_normal(12), i % 5)
        assert est.state_nbytes() == size_warm
        assert est.observe_count == 5050

    def test_consuming_covariance_spends_the_estimator(self):
        rng = np.random.default_rng(19)
        X = rng.standard_normal((40, 4))
        y = rng.integers(0, 2, size=40)
        keep = feed(StreamingEstimator(4), X, y)
        spend = feed(StreamingEstimator(4), X, y)
        expected = keep.covariance()
        np.testing.assert_array_equal(spend.covariance(copy=False), expected)
        with pytest.raises(ModelStateError):
            spend.observe(np.zeros(4), 0)
        with pytest.raises(ModelStateError):
            spend.covariance()

    def test_mean_only_mode_has_no_scatter(self):
        est = StreamingEstimator(4, track_scatter=False)
        full = StreamingEstimator(4)
        for model in (est, full):
            model.observe(np.ones(4), 0)
            model.observe(np.zeros(4), 1)
        with pytest.raises(ModelStateError):
            est.covariance()
        assert set(est.class_means()) == {0, 1}
        assert full.state_nbytes() - est.state_nbytes() == 4 * 4 * 8  # the E x E term


class TestCheckpoint:
    def test_round_trip_preserves_every_statistic(self, tmp_path):
        rng = np.random.default_rng(20)
        X = rng.standard_normal((150, 6))
        y = rng.integers(0, 4, size=150)
        est = feed(StreamingEstimator(6), X, y)
        path = tmp_path / "estimator.rdck"
        est.save(path)
        back = StreamingEstimator.load(path)
        assert back.total_count == est.total_count
        assert back.class_counts() == est.class_counts()
        np.testing.assert_array_equal(back.covariance(), est.covariance())
        for label in est.classes_seen:
            np.testing.assert_array_equal(back.class_means()[label], est.class_means()[label])

    def test_resume_matches_uninterrupted_run_bitwise(self, tmp_path):
        """Saving mid-stream and resuming replays the identical float
        operations, so the final state is bit-identical."""
        rng = np.random.default_rng(21)
        X = rng.standard_normal((80, 5))
        y = rng.integers(0, 3, size=80)
        whole = feed(StreamingEstimator(5), X, y)

        first = feed(StreamingEstimator(5), X[:37], y[:37])
        path = tmp_path / "mid.rdck"
        first.save(path)
        resumed = feed(StreamingEstimator.load(path), X[37:], y[37:])
        np.testing.assert_array_equal(resumed.covariance(), whole.covariance())

    def test_wrong_kind_rejected(self, tmp_path):
        from randumb.data_io import write_checkpoint

        path = tmp_path / "other.rdck"
        write_checkpoint(path, {"kind": "something_else"}, {})
        with pytest.raises(DataError):
            StreamingEstimator.load(path)
