"""The decision rule and its ablation variants.

Variants:

* ``randumb``    random Fourier embedding, then nearest class mean under
                 the shrunk-covariance Mahalanobis metric.
* ``kernel_ncm`` same embedding, raw inner-product similarity to the
                 class means (drops the decorrelation step).
* ``slda``       Mahalanobis rule directly on the raw input vectors
                 (drops the embedding).
* ``ncm``        inner-product nearest class mean on raw inputs (drops
                 both).
* ``rp_relu``    relu(Wx) random-projection embedding with the full
                 Mahalanobis rule.

Mahalanobis variants take the argmin of the squared distance; the
inner-product variants take the argmax of phi(x) . mean_i.  Ties break
toward the smallest class label in both senses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data_io
from .errors import (
    ConfigurationError,
    DataError,
    EmptyModelError,
    ModelStateError,
    ShapeError,
)
from .fourier import FeatureMap, FeatureMapSpec
from .precision import build_precision, oas_shrink
from .streaming import MODE_POOLED, MODES, StreamingEstimator

VARIANTS = ("randumb", "kernel_ncm", "slda", "ncm", "rp_relu")
PRECISION_VARIANTS = ("randumb", "slda", "rp_relu")
EMBEDDED_VARIANTS = ("randumb", "kernel_ncm", "rp_relu")


@dataclass(frozen=True)
class RPSpec:
    """Random projection + rectifier embedding: relu(Wx), W iid N(0, 1)."""

    input_dim: int
    output_dim: int
    seed: int

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError("projection dimensions must be positive")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")

    @property
    def embed_dim(self) -> int:
        return self.output_dim


class RandomReluMap:
    """Frozen rectified random projection, same shape contract as FeatureMap."""

    def __init__(self, spec: RPSpec):
        self.spec = spec
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        self.weights = rng.standard_normal(
            (spec.output_dim, spec.input_dim)
        ).astype(np.float32)

    @property
    def embed_dim(self) -> int:
        return self.spec.output_dim

    def embed(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim != 1 or x.shape[0] != self.spec.input_dim:
            raise ShapeError(
                f"expected a flat vector of length {self.spec.input_dim}, "
                f"got shape {x.shape}"
            )
        return self.embed_batch(x[None, :])[0]

    def embed_batch(self, X: np.ndarray, block: int = 256) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.spec.input_dim:
            raise ShapeError(
                f"expected (n, {self.spec.input_dim}) inputs, got shape {X.shape}"
            )
        out = np.empty((X.shape[0], self.embed_dim), dtype=np.float32)
        X32 = X.astype(np.float32, copy=False)
        for start in range(0, X.shape[0], block):
            stop = min(start + block, X.shape[0])
            np.maximum(X32[start:stop] @ self.weights.T, 0.0, out=out[start:stop])
        return out


@dataclass(frozen=True)
class ModelVariant:
    """Configuration of one classifier: variant name, embedding spec,
    ridge strength, and covariance centering mode.

    ``randumb``/``kernel_ncm`` require a FeatureMapSpec and ``rp_relu``
    an RPSpec; ``slda``/``ncm`` run on raw inputs and take ``input_dim``
    instead.  ``ridge`` is ignored by the two inner-product variants.
    """

    variant: str
    embedding: FeatureMapSpec | RPSpec | None = None
    ridge: float = 0.0
    estimator_mode: str = MODE_POOLED
    pooled_unbiased: bool = False
    input_dim: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        if self.variant in ("randumb", "kernel_ncm"):
            if not isinstance(self.embedding, FeatureMapSpec):
                raise ConfigurationError(
                    f"variant {self.variant} requires a Fourier embedding spec"
                )
        elif self.variant == "rp_relu":
            if not isinstance(self.embedding, RPSpec):
                raise ConfigurationError(
                    "variant rp_relu requires a random-projection spec"
                )
        else:
            if self.embedding is not None:
                raise ConfigurationError(
                    f"variant {self.variant} runs on raw inputs and forbids "
                    f"an embedding spec"
                )
            if self.input_dim is None or self.input_dim < 1:
                raise ConfigurationError(
                    f"variant {self.variant} needs a positive input_dim"
                )
        if self.embedding is not None and self.input_dim is not None:
            if self.input_dim != self.embedding.input_dim:
                raise ConfigurationError(
                    f"input_dim {self.input_dim} contradicts the embedding "
                    f"spec's {self.embedding.input_dim}"
                )
        if not (self.ridge >= 0) or not np.isfinite(self.ridge):
            raise ConfigurationError(f"ridge must be finite and >= 0, got {self.ridge}")
        if self.estimator_mode not in MODES:
            raise ConfigurationError(
                f"estimator_mode must be one of {MODES}, got {self.estimator_mode!r}"
            )

    @property
    def raw_input_dim(self) -> int:
        return self.embedding.input_dim if self.embedding else self.input_dim

    @property
    def embed_dim(self) -> int:
        return self.embedding.embed_dim if self.embedding else self.input_dim

    @property
    def needs_precision(self) -> bool:
        return self.variant in PRECISION_VARIANTS


def _build_map(config: ModelVariant):
    if isinstance(config.embedding, FeatureMapSpec):
        return FeatureMap(config.embedding)
    if isinstance(config.embedding, RPSpec):
        return RandomReluMap(config.embedding)
    return None


class StreamingClassifier:
    """One streaming model: embed each sample, fold it into the running
    statistics, finalize once, then score test points.

    ``observe`` may resume after a non-consuming ``finalize`` (the
    scores simply reflect the most recent finalize).  A consuming
    finalize releases the scatter buffer to the precision step, capping
    peak memory at a single E x E float64 array, and ends the stream.
    """

    def __init__(self, config: ModelVariant):
        self.config = config
        self.feature_map = _build_map(config)
        self.estimator = StreamingEstimator(
            config.embed_dim,
            mode=config.estimator_mode,
            pooled_unbiased=config.pooled_unbiased,
            track_scatter=config.needs_precision,
        )
        self._labels: np.ndarray | None = None
        self._means: np.ndarray | None = None
        self._precision = None
        self._lin_weights = None
        self._lin_bias = None
        self.shrinkage_rho: float | None = None
        self.shrinkage_mu: float | None = None

    @property
    def finalized(self) -> bool:
        return self._labels is not None

    def _embed(self, x: np.ndarray) -> np.ndarray:
        if self.feature_map is not None:
            return self.feature_map.embed(x)
        return np.asarray(x)

    def observe(self, x_raw: np.ndarray, label: int) -> None:
        """Embed one raw sample and fold it into the statistics."""
        self.estimator.observe(self._embed(x_raw), label)

    def finalize(self, consume: bool = False) -> None:
        """Snapshot the class means and (for Mahalanobis variants)
        shrink + ridge + factorize the covariance.

        consume=True hands the estimator's own scatter buffer through
        shrinkage and factorization without any copy; the estimator is
        spent afterwards.
        """
        if self.estimator.total_count == 0:
            raise EmptyModelError("no samples observed; nothing to finalize")
        means = self.estimator.class_means()
        self._labels = np.asarray(sorted(means), dtype=np.int64)
        self._means = np.stack([means[c] for c in self._labels])
        if self.config.needs_precision:
            cov = self.estimator.covariance(copy=not consume)
            shrink = oas_shrink(cov, self.estimator.total_count, copy=False)
            self.shrinkage_rho = shrink.rho
            self.shrinkage_mu = shrink.mu
            self._precision = build_precision(
                shrink.shrunk, self.config.ridge, overwrite=True
            )
            # Linear form of the same rule for batch scoring:
            # w_i = A^{-1} mu_i, b_i = -1/2 mu_i^T w_i with A = shrunk + ridge I.
            weights = self._precision.solve(self._means.T)
            self._lin_weights = weights
            self._lin_bias = -0.5 * np.einsum("ec,ec->c", self._means.T, weights)

    @property
    def precision(self):
        return self._precision

    def _require_finalized(self) -> None:
        if not self.finalized:
            if self.estimator.total_count == 0:
                raise EmptyModelError("no classes observed yet")
            raise ModelStateError("call finalize() before scoring")

    def scores(self, x_raw: np.ndarray) -> dict[int, float]:
        """Per-class values behind predict: squared Mahalanobis distance
        (smaller is better) for randumb/slda/rp_relu, inner-product
        similarity (larger is better) for kernel_ncm/ncm."""
        self._require_finalized()
        phi = np.asarray(self._embed(x_raw), dtype=np.float64)
        if phi.shape != (self.config.embed_dim,):
            raise ShapeError(
                f"expected input of dim {self.config.raw_input_dim}, "
                f"embedded shape came out {phi.shape}"
            )
        out: dict[int, float] = {}
        if self.config.needs_precision:
            for label, mean in zip(self._labels, self._means):
                out[int(label)] = self._precision.mahalanobis_sq(phi - mean)
        else:
            for label, mean in zip(self._labels, self._means):
                out[int(label)] = float(phi @ mean)
        return out

    def predict(self, x_raw: np.ndarray) -> int:
        """The extremal label of scores(): argmin for Mahalanobis
        variants, argmax for inner-product variants; ties go to the
        smallest label."""
        scores = self.scores(x_raw)
        minimize = self.config.needs_precision
        best_label = None
        best_value = None
        for label in sorted(scores):
            value = scores[label]
            if best_label is None or (
                value < best_value if minimize else value > best_value
            ):
                best_label, best_value = label, value
        return best_label

    def predict_batch(self, X_raw: np.ndarray, block: int = 256) -> np.ndarray:
        """Labels for many raw inputs, embedding and scoring blockwise.

        For Mahalanobis variants this evaluates the algebraically
        equivalent linear discriminant w_i . phi + b_i (the common
        phi^T A^{-1} phi term cancels across classes), so only an
        (n, C) score block is materialized.
        """
        self._require_finalized()
        X_raw = np.asarray(X_raw)
        if X_raw.ndim != 2 or X_raw.shape[1] != self.config.raw_input_dim:
            raise ShapeError(
                f"expected (n, {self.config.raw_input_dim}) inputs, "
                f"got shape {X_raw.shape}"
            )
        n = X_raw.shape[0]
        out = np.empty(n, dtype=np.int64)
        for start in range(0, n, block):
            stop = min(start + block, n)
            if self.feature_map is not None:
                phi = self.feature_map.embed_batch(X_raw[start:stop])
            else:
                phi = X_raw[start:stop]
            phi = phi.astype(np.float64, copy=False)
            if self.config.needs_precision:
                scores = phi @ self._lin_weights + self._lin_bias
            else:
                scores = phi @ self._means.T
            out[start:stop] = self._labels[np.argmax(scores, axis=1)]
        return out

    # -- checkpointing ------------------------------------------------------

    def save(self, path) -> None:
        """Checkpoint = variant tag + embedding spec + ridge + estimator
        state.  Finalized artifacts are rebuilt by finalize() on load."""
        est_meta, arrays = self.estimator._state()
        emb = self.config.embedding
        if isinstance(emb, FeatureMapSpec):
            emb_meta = {
                "type": "fourier",
                "input_dim": emb.input_dim,
                "num_bases": emb.num_bases,
                "gamma": emb.gamma,
                "seed": emb.seed,
            }
        elif isinstance(emb, RPSpec):
            emb_meta = {
                "type": "rp",
                "input_dim": emb.input_dim,
                "output_dim": emb.output_dim,
                "seed": emb.seed,
            }
        else:
            emb_meta = None
        meta = {
            "kind": "classifier",
            "variant": self.config.variant,
            "ridge": self.config.ridge,
            "input_dim": self.config.input_dim,
            "embedding": emb_meta,
            "estimator": est_meta,
        }
        data_io.write_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "StreamingClassifier":
        meta, arrays = data_io.read_checkpoint(path)
        if meta.get("kind") != "classifier":
            raise DataError(f"{path}: not a classifier checkpoint")
        emb_meta = meta["embedding"]
        if emb_meta is None:
            embedding = None
        elif emb_meta["type"] == "fourier":
            embedding = FeatureMapSpec(
                input_dim=int(emb_meta["input_dim"]),
                num_bases=int(emb_meta["num_bases"]),
                gamma=float(emb_meta["gamma"]),
                seed=int(emb_meta["seed"]),
            )
        elif emb_meta["type"] == "rp":
            embedding = RPSpec(
                input_dim=int(emb_meta["input_dim"]),
                output_dim=int(emb_meta["output_dim"]),
                seed=int(emb_meta["seed"]),
            )
        else:
            raise DataError(f"{path}: unknown embedding type {emb_meta['type']!r}")
        est_meta = meta["estimator"]
        config = ModelVariant(
            variant=meta["variant"],
            embedding=embedding,
            ridge=float(meta["ridge"]),
            estimator_mode=est_meta["mode"],
            pooled_unbiased=bool(est_meta["pooled_unbiased"]),
            input_dim=meta["input_dim"],
        )
        model = cls(config)
        model.estimator = StreamingEstimator._from_state(est_meta, arrays)
        return model
