"""Independent brute-force references for tests and the `verify` command.

Everything here is coded directly from definitions: two-pass batch
statistics, explicit dense inverses, literal kernel evaluation.  None
of it calls into the streaming modules, so agreement between the two
sides is evidence, not circularity.  Slow on purpose; sized for E <= 50.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, NumericalError


def exact_rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2), evaluated literally."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"need two equal-length vectors, got {x.shape} and {y.shape}")
    if not gamma > 0:
        raise DataError(f"gamma must be > 0, got {gamma}")
    diff = x - y
    return float(np.exp(-gamma * (diff @ diff)))


def exact_rbf_kernel_matrix(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise kernel matrix via explicit squared distances."""
    sq = cdist(np.asarray(X, np.float64), np.asarray(Y, np.float64), "sqeuclidean")
    return np.exp(-gamma * sq)


@dataclass
class BatchStats:
    """Two-pass batch statistics: per-class means, the grand mean, the
    centered scatter, and its (n - 1)-normalized covariance."""

    means: dict[int, np.ndarray]
    counts: dict[int, int]
    grand_mean: np.ndarray
    scatter: np.ndarray
    covariance: np.ndarray


def batch_stats(
    samples: np.ndarray, labels: np.ndarray, mode: str = "pooled_within_class"
) -> BatchStats:
    """Textbook batch computation: means first, then centered outer sums.

    mode "pooled_within_class" centers each sample on its class mean;
    "global" centers everything on the grand mean.
    """
    X = np.asarray(samples, dtype=np.float64)
    y = np.asarray(labels)
    n = X.shape[0]
    if n < 2:
        raise DataError(f"need n >= 2 samples, got {n}")
    means = {}
    counts = {}
    for label in np.unique(y):
        members = X[y == label]
        means[int(label)] = members.mean(axis=0)
        counts[int(label)] = len(members)
    grand_mean = X.mean(axis=0)
    if mode == "pooled_within_class":
        centers = np.stack([means[int(label)] for label in y])
    elif mode == "global":
        centers = np.broadcast_to(grand_mean, X.shape)
    else:
        raise DataError(f"unknown mode {mode!r}")
    centered = X - centers
    scatter = centered.T @ centered
    return BatchStats(
        means=means,
        counts=counts,
        grand_mean=grand_mean,
        scatter=scatter,
        covariance=scatter / (n - 1),
    )


def oas_reference(S: np.ndarray, n: int):
    """Independent transcription of the shrinkage estimator.

    Deliberately written with different primitives than the production
    code (np.trace of an explicit matrix product, np.eye target) so a
    transcription slip in either copy shows up as disagreement.

    Returns (rho, mu, shrunk).
    """
    S = np.asarray(S, dtype=np.float64)
    e = S.shape[0]
    trace_s = np.trace(S)
    trace_s_sq = np.trace(S @ S)
    mu = trace_s / e
    numerator = (1.0 - 2.0 / e) * trace_s_sq + trace_s**2
    denominator = (n + 1.0 - 2.0 / e) * (trace_s_sq - trace_s**2 / e)
    if denominator <= 0.0:
        rho = 1.0
    else:
        rho = min(1.0, numerator / denominator)
    shrunk = (1.0 - rho) * S + rho * mu * np.eye(e)
    return rho, mu, shrunk


def batch_lda_predict(
    means: dict[int, np.ndarray],
    covariance: np.ndarray,
    ridge: float,
    X: np.ndarray,
) -> np.ndarray:
    """Linear discriminant with an explicit dense inverse.

    Scores class i as w_i . x + b_i with w_i = (Sigma + ridge I)^{-1} mu_i
    and b_i = -1/2 mu_i . w_i; ties resolve to the smallest label.
    """
    cov = np.asarray(covariance, dtype=np.float64)
    e = cov.shape[0]
    try:
        inv = np.linalg.inv(cov + ridge * np.eye(e))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"regularized covariance is singular: {exc}") from exc
    labels = sorted(means)
    M = np.stack([means[c] for c in labels])  # (C, E)
    W = inv @ M.T  # (E, C)
    b = -0.5 * np.einsum("ce,ec->c", M, W)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    scores = X @ W + b
    picks = np.argmax(scores, axis=1)  # first max = smallest label
    return np.asarray(labels, dtype=np.int64)[picks]


def batch_mahalanobis_predict(
    means: dict[int, np.ndarray],
    covariance: np.ndarray,
    ridge: float,
    X: np.ndarray,
) -> np.ndarray:
    """Quadratic-form nearest class mean with an explicit dense inverse."""
    cov = np.asarray(covariance, dtype=np.float64)
    e = cov.shape[0]
    inv = np.linalg.inv(cov + ridge * np.eye(e))
    labels = sorted(means)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    dists = np.empty((X.shape[0], len(labels)))
    for j, label in enumerate(labels):
        delta = X - means[label]
        dists[:, j] = np.einsum("ne,ef,nf->n", delta, inv, delta)
    picks = np.argmin(dists, axis=1)  # first min = smallest label
    return np.asarray(labels, dtype=np.int64)[picks]


# ---------------------------------------------------------------------------
# Verify suite
# ---------------------------------------------------------------------------


@dataclass
class OracleReport:
    """Outcome of one verification check: pass iff the worst observed
    error is within tolerance."""

    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)

    def to_json(self) -> dict:
        return {
            "check": self.name,
            "max_error": float(self.max_error),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
        }


def _check_streaming_vs_batch(rng) -> OracleReport:
    from .streaming import MODES, StreamingEstimator

    worst = 0.0
    for trial in range(6):
        e = int(rng.integers(4, 32))
        n = int(rng.integers(50, 400))
        k = int(rng.integers(2, 8))
        X = rng.standard_normal((n, e))
        y = rng.integers(0, k, size=n)
        for mode in MODES:
            est = StreamingEstimator(e, mode=mode)
            for xi, yi in zip(X, y):
                est.observe(xi, yi)
            ref = batch_stats(X, y, mode=mode)
            scale = max(np.abs(ref.covariance).max(), 1e-12)
            worst = max(worst, np.abs(est.covariance() - ref.covariance).max() / scale)
            for label, mean in est.class_means().items():
                mscale = max(np.abs(ref.means[label]).max(), 1e-12)
                worst = max(worst, np.abs(mean - ref.means[label]).max() / mscale)
    return OracleReport("streaming_matches_batch", worst, 1e-8)


def _check_rff_kernel(rng) -> OracleReport:
    from .fourier import FeatureMap, FeatureMapSpec

    d = 10
    X = rng.standard_normal((100, d)) * 0.4
    Y = rng.standard_normal((100, d)) * 0.4
    exact = exact_rbf_kernel_matrix(X, Y, 1.0).diagonal()

    def mae(num_bases: int, seed: int) -> float:
        fm = FeatureMap(FeatureMapSpec(d, num_bases, 1.0, seed))
        approx = np.einsum("ij,ij->i", fm.embed_batch(X), fm.embed_batch(Y))
        return float(np.abs(approx - exact).mean())

    worst = max(mae(5000, seed) for seed in range(3))
    coarse = np.mean([mae(100, s) for s in range(5)])
    fine = np.mean([mae(10000, s) for s in range(5)])
    if fine >= coarse:
        worst = max(worst, 1.0)  # monotonicity violation forces a failure
    return OracleReport("rff_kernel_approximation", worst, 0.02)


def _check_oas(rng) -> OracleReport:
    from .precision import oas_shrink

    worst = 0.0
    for _ in range(5):
        e, n = 20, 50
        A = rng.standard_normal((n, e))
        S = A.T @ A / n
        result = oas_shrink(S, n)
        rho_ref, mu_ref, shrunk_ref = oas_reference(S, n)
        worst = max(worst, abs(result.rho - rho_ref))
        worst = max(worst, abs(result.mu - mu_ref))
        worst = max(worst, np.abs(result.shrunk - shrunk_ref).max())
        if not (0.0 <= result.rho <= 1.0):
            worst = max(worst, 1.0)
    ident = oas_shrink(3.5 * np.eye(12), 100)
    worst = max(worst, np.abs(ident.shrunk - 3.5 * np.eye(12)).max())
    return OracleReport("oas_matches_reference", worst, 1e-10)


def _check_sherman_morrison(rng) -> OracleReport:
    from .precision import sherman_morrison_update

    e = 30
    A = np.eye(e) * 2.0
    inv = np.linalg.inv(A)
    for _ in range(200):
        u = rng.standard_normal(e)
        c = float(rng.uniform(0.1, 1.0))
        A += c * np.outer(u, u)
        inv = sherman_morrison_update(inv, u, c)
    worst = float(np.abs(inv - np.linalg.inv(A)).max())
    return OracleReport("sherman_morrison_vs_direct_inverse", worst, 1e-6)


def _check_lda_equivalence(rng) -> OracleReport:
    from .classifier import ModelVariant, StreamingClassifier

    e, k, per_class = 10, 3, 100
    centers = rng.standard_normal((k, e)) * 2.0
    X = np.concatenate(
        [centers[i] + rng.standard_normal((per_class, e)) for i in range(k)]
    )
    y = np.repeat(np.arange(k), per_class)
    model = StreamingClassifier(
        ModelVariant(variant="slda", ridge=1e-3, input_dim=e)
    )
    for xi, yi in zip(X, y):
        model.observe(xi, yi)
    model.finalize()
    stats = batch_stats(X, y)
    tests = rng.standard_normal((1000, e)) * 2.0
    # The model shrinks before inverting, so the oracle gets the same
    # shrunk matrix (computed by the independent transcription).
    _, _, shrunk = oas_reference(stats.covariance, len(y))
    oracle = batch_lda_predict(stats.means, shrunk, 1e-3, tests)
    mine = np.array([model.predict(t) for t in tests])
    disagreement = float(np.mean(mine != oracle))
    # And the equivalence theorem itself: quadratic argmin == linear
    # argmax on one shared matrix.
    quad = batch_mahalanobis_predict(stats.means, shrunk, 1e-3, tests)
    disagreement = max(disagreement, float(np.mean(quad != oracle)))
    return OracleReport("lda_equivalence", disagreement, 0.0)


def run_verify(seed: int = 0) -> list[OracleReport]:
    """Run every oracle check at desk scale; returns one report each."""
    checks = [
        _check_streaming_vs_batch,
        _check_rff_kernel,
        _check_oas,
        _check_sherman_morrison,
        _check_lda_equivalence,
    ]
    reports = []
    for i, check in enumerate(checks):
        reports.append(check(np.random.default_rng(seed + i)))
    return reports
