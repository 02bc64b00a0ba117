"""Acceptance gates for the whole package, one test per gate.

Gates that need a real dataset on disk (MNIST / CIFAR-10) or the
full-scale memory budget skip with an explanatory message instead of
silently passing; everything else runs on any machine in minutes.
"""

import os

import numpy as np
import pytest

from conftest import (
    blob_dataset,
    require_cifar10,
    require_full_scale,
    require_mnist,
)
from randumb import (
    FeatureMap,
    FeatureMapSpec,
    ModelVariant,
    StreamingClassifier,
    StreamingEstimator,
    load_dataset,
    oas_shrink,
    run_ablation,
    run_on_dataset,
    sweep_embedding,
)
from randumb.data_io import dataset_from_features
from randumb.precision import build_precision, sherman_morrison_update
from randumb.reference import (
    batch_lda_predict,
    batch_stats,
    exact_rbf_kernel,
    oas_reference,
)
from randumb.streaming import MODES


def relative_max_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.abs(b).max()), 1e-30)
    return float(np.abs(a - b).max()) / scale


class TestPropertyGates:
    def test_streaming_statistics_match_batch_and_ignore_order(self):
        # 50 random streams, E <= 50, n <= 5000, up to 10 classes, both
        # centering modes: the online statistics must match the two-pass
        # batch computation and a permuted replay of the same stream,
        # each within 1e-8 relative error.
        rng = np.random.default_rng(1234)
        worst_batch = 0.0
        worst_perm = 0.0
        for trial in range(50):
            e = int(rng.integers(2, 51))
            n = int(rng.integers(50, 5001))
            k = int(rng.integers(2, 11))
            X = rng.standard_normal((n, e))
            y = rng.integers(0, k, size=n)
            perm = rng.permutation(n)
            for mode in MODES:
                est = StreamingEstimator(e, mode=mode)
                for x, c in zip(X, y):
                    est.observe(x, int(c))
                est_perm = StreamingEstimator(e, mode=mode)
                for i in perm:
                    est_perm.observe(X[i], int(y[i]))

                ref = batch_stats(X, y, mode=mode)
                cov = est.covariance()
                worst_batch = max(
                    worst_batch, relative_max_error(cov, ref.covariance)
                )
                means = est.class_means()
                for c, mu in ref.means.items():
                    worst_batch = max(
                        worst_batch, relative_max_error(means[c], mu)
                    )
                cov_perm = est_perm.covariance()
                worst_perm = max(worst_perm, relative_max_error(cov_perm, cov))
                means_perm = est_perm.class_means()
                for c in means:
                    worst_perm = max(
                        worst_perm, relative_max_error(means_perm[c], means[c])
                    )
        assert worst_batch <= 1e-8, f"streaming vs batch: {worst_batch:.3e}"
        assert worst_perm <= 1e-8, f"permutation invariance: {worst_perm:.3e}"

    def test_fourier_kernel_error_small_and_shrinking(self):
        # At 5000 frequency pairs the mean absolute gap between embedded
        # inner products and the exact Gaussian kernel over 100 random
        # pairs stays under 0.02, and the gap at 10000 pairs is smaller
        # than at 100 pairs averaged over 5 feature seeds.
        d = 5
        gamma = 1.0
        rng = np.random.default_rng(7)
        pairs = (rng.standard_normal((100, 2, d)) * 0.5).astype(np.float64)
        exact = np.array(
            [exact_rbf_kernel(x, y, gamma) for x, y in pairs]
        )

        def mean_abs_error(num_bases: int, seed: int) -> float:
            spec = FeatureMapSpec(
                input_dim=d, num_bases=num_bases, gamma=gamma, seed=seed
            )
            fmap = FeatureMap(spec)
            lhs = fmap.embed_batch(pairs[:, 0]).astype(np.float64)
            rhs = fmap.embed_batch(pairs[:, 1]).astype(np.float64)
            approx = np.einsum("ne,ne->n", lhs, rhs)
            return float(np.abs(approx - exact).mean())

        assert mean_abs_error(5000, seed=0) < 0.02

        coarse = np.mean([mean_abs_error(100, s) for s in range(5)])
        fine = np.mean([mean_abs_error(10000, s) for s in range(5)])
        assert fine < coarse, f"error grew with width: {fine:.4f} vs {coarse:.4f}"

    def test_shrinkage_bounds_identity_and_oracle_agreement(self):
        rng = np.random.default_rng(11)
        # Mixing weight stays in [0, 1] across benign and degenerate inputs.
        cases = []
        for e in (2, 5, 20, 60):
            A = rng.standard_normal((e + 3, e))
            cases.append((A.T @ A / (e + 3), e + 3))
            v = rng.standard_normal(e)
            cases.append((np.outer(v, v), 2))          # rank one
            cases.append((np.zeros((e, e)), 5))        # all zero
            cases.append((np.eye(e) * 3.0, 10**9))     # huge n
        for S, n in cases:
            rho = oas_shrink(S, n).rho
            assert 0.0 <= rho <= 1.0, rho

        # A scaled identity is a fixed point.
        S = 2.5 * np.eye(40)
        result = oas_shrink(S.copy(), 100)
        assert np.abs(result.shrunk - S).max() == 0.0
        assert result.rho == 1.0

        # Agreement with the independent transcription on random SPD input.
        worst = 0.0
        for trial in range(10):
            e = int(rng.integers(4, 64))
            n = int(rng.integers(e, 500))
            A = rng.standard_normal((n, e))
            S = A.T @ A / n
            mine = oas_shrink(S.copy(), n)
            rho_ref, mu_ref, shrunk_ref = oas_reference(S, n)
            worst = max(worst, abs(mine.rho - rho_ref))
            worst = max(worst, abs(mine.mu - mu_ref))
            worst = max(worst, float(np.abs(mine.shrunk - shrunk_ref).max()))
        assert worst <= 1e-10, f"oracle disagreement {worst:.3e}"

    def test_sherman_morrison_tracks_dense_inverse(self):
        # 200 sequential rank-one updates at dimension 30 stay within
        # 1e-6 max-abs of the from-scratch inverse.
        e = 30
        rng = np.random.default_rng(13)
        A = np.eye(e) + 0.1 * np.diag(rng.random(e))
        inv = np.linalg.inv(A)
        for _ in range(200):
            u = rng.standard_normal(e) * 0.3
            c = float(rng.random()) + 0.05
            A += c * np.outer(u, u)
            inv = sherman_morrison_update(inv, u, c)
        direct = np.linalg.inv(A)
        err = float(np.abs(inv - direct).max())
        assert err <= 1e-6, f"max-abs drift {err:.3e}"

    def test_predictions_match_batch_lda_oracle_everywhere(self):
        # On balanced classes, the streaming classifier's label must agree
        # with the explicit batch discriminant on all 1000 test points.
        rng = np.random.default_rng(17)
        k, per_class, d = 5, 200, 8
        centers = rng.standard_normal((k, d)) * 2.0
        X = np.concatenate(
            [centers[i] + rng.standard_normal((per_class, d)) for i in range(k)]
        )
        y = np.repeat(np.arange(k), per_class)
        order = rng.permutation(len(y))
        X, y = X[order], y[order]

        ridge = 1e-4
        model = StreamingClassifier(
            ModelVariant(variant="slda", input_dim=d, ridge=ridge)
        )
        for x, c in zip(X, y):
            model.observe(x, int(c))
        model.finalize()

        ref = batch_stats(X, y)
        _, _, shrunk = oas_reference(ref.covariance, len(y))
        T = rng.standard_normal((1000, d))
        oracle = batch_lda_predict(ref.means, shrunk, ridge, T)
        singles = np.array([model.predict(t) for t in T])
        agreement = float((singles == oracle).mean())
        assert agreement == 1.0, f"agreement {agreement:.4f}"
        np.testing.assert_array_equal(model.predict_batch(T), singles)


class TestDatasetGates:
    def test_variant_ordering_on_mnist_desk_configuration(self):
        base = require_mnist()
        data = load_dataset("mnist", base)
        results = run_ablation(
            data,
            variants=("randumb", "slda", "kernel_ncm", "ncm"),
            embed_dim=2000,
            ridge=1e-6,
            augment=False,
            seed=0,
        )
        accs = {r.config["variant"]: r.average_accuracy for r in results}
        assert (
            accs["randumb"] > accs["slda"] > accs["kernel_ncm"] > accs["ncm"]
        ), f"ordering violated: {accs}"

    def test_full_scale_mnist_accuracy_band(self):
        base = require_mnist()
        require_full_scale()
        data = load_dataset("mnist", base)
        result = run_on_dataset(data, variant="randumb", embed_dim=25000, seed=0)
        accuracy = result.average_accuracy * 100
        assert 96.8 <= accuracy <= 99.8, f"accuracy {accuracy:.2f}"

    def test_full_scale_cifar10_accuracy_and_flip_gap(self):
        base = require_cifar10()
        require_full_scale()
        data = load_dataset("cifar10", base)
        flipped = run_on_dataset(
            data, variant="randumb", embed_dim=25000, seed=0, augment=True
        )
        plain = run_on_dataset(
            data, variant="randumb", embed_dim=25000, seed=0, augment=False
        )
        accuracy = flipped.average_accuracy * 100
        assert 54.1 <= accuracy <= 57.1, f"accuracy {accuracy:.2f}"
        gap = (flipped.average_accuracy - plain.average_accuracy) * 100
        assert 2.1 <= gap <= 4.1, f"flip gap {gap:.2f}"

    def test_full_scale_mnist_embedding_sweep_gaps(self):
        base = require_mnist()
        require_full_scale()
        data = load_dataset("mnist", base)
        results = sweep_embedding(
            [1000, 15000, 25000], data, variant="randumb", seed=0
        )
        acc = {r.config["state_dim"]: r.average_accuracy * 100 for r in results}
        wide_gap = acc[25000] - acc[1000]
        assert 2.6 <= wide_gap <= 4.6, f"gap to smallest width {wide_gap:.2f}"
        assert acc[25000] - acc[15000] <= 0.5, (
            f"gap to mid width {acc[25000] - acc[15000]:.2f}"
        )


class TestContractGates:
    def test_state_size_constant_over_hundred_thousand_steps(self):
        # The model state must not grow with stream length: only the
        # accumulator, one mean per class, and counters.
        e, k, n = 16, 10, 100_000
        rng = np.random.default_rng(23)
        X = rng.standard_normal((n, e)).astype(np.float32)
        y = (np.arange(n) % k).astype(np.int64)

        est = StreamingEstimator(e)
        sizes = []
        for i in range(n):
            est.observe(X[i], int(y[i]))
            if i + 1 in (1000, 10_000, 50_000, 100_000):
                sizes.append(est.state_nbytes())
        assert len(set(sizes)) == 1, f"state grew: {sizes}"

        # A 200-step stream over the same classes holds the same bytes.
        short = StreamingEstimator(e)
        for i in range(200):
            short.observe(X[i], int(y[i]))
        assert short.state_nbytes() == sizes[-1]

        # End to end through the harness, whose one-pass assertion runs
        # on every step.
        data = dataset_from_features(X, y, X[:1000], y[:1000])
        result = run_on_dataset(data, variant="slda", seed=0)
        assert result.observe_count == n
        assert result.peak_memory_estimate_bytes < 64 * 1024**2

    def test_identical_configs_reproduce_identical_results(self):
        data = blob_dataset(seed=29, num_classes=5, dim=10, train_per_class=60)
        runs = [
            run_on_dataset(
                data, variant="randumb", embed_dim=128, gamma=0.05, seed=4
            )
            for _ in range(2)
        ]
        assert runs[0].average_accuracy == runs[1].average_accuracy
        assert runs[0].per_class_accuracy == runs[1].per_class_accuracy
        assert runs[0].class_average_accuracy == runs[1].class_average_accuracy
        assert runs[0].shrinkage_rho == runs[1].shrinkage_rho
        assert runs[0].shrinkage_mu == runs[1].shrinkage_mu
        assert runs[0].log_det == runs[1].log_det
