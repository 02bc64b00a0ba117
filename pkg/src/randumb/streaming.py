"""Exact one-sample-at-a-time estimation of class means and a pooled
scatter matrix in embedding space.

The update is the rank-1 telescoping rule: with n_c and mu_c the
PRE-update count and mean of the sample's own class,

    scatter += (n_c / (n_c + 1)) * (phi - mu_c) (phi - mu_c)^T
    mu_c    += (phi - mu_c) / (n_c + 1)

which sums exactly (in exact arithmetic) to the batch pooled
within-class scatter, for any arrival order.  A "global" mode applies
the same rule with the grand mean and total count instead, yielding the
scatter around the grand mean.

No sample is ever stored: state is one E x E float64 accumulator plus
one float64 mean vector and a count per class, so memory is
O(E^2 + C*E) no matter how long the stream runs.

The accumulator is Fortran-ordered and only its upper triangle is
written, via the BLAS rank-1 symmetric update (dsyr) to avoid an E x E
temporary per step; reads mirror the triangle into a full symmetric
matrix.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg.blas import dsyr

from . import data_io
from .errors import (
    ConfigurationError,
    DataError,
    InsufficientDataError,
    ModelStateError,
    ShapeError,
)

MODE_POOLED = "pooled_within_class"
MODE_GLOBAL = "global"
MODES = (MODE_POOLED, MODE_GLOBAL)

_MIRROR_BLOCK = 1024


def _mirror_upper(a: np.ndarray, block: int = _MIRROR_BLOCK) -> np.ndarray:
    """Copy the upper triangle of ``a`` onto the lower, blockwise, in place.

    Works block-by-block so no temporary larger than block^2 is created
    even for very large matrices.
    """
    n = a.shape[0]
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        diag = a[i0:i1, i0:i1]
        diag[:] = np.triu(diag) + np.triu(diag, 1).T
        for j0 in range(i1, n, block):
            j1 = min(j0 + block, n)
            a[j0:j1, i0:i1] = a[i0:i1, j0:j1].T
    return a


class ClassStats:
    """Running count and mean for one class label."""

    __slots__ = ("class_id", "count", "mean")

    def __init__(self, class_id: int, embed_dim: int):
        self.class_id = class_id
        self.count = 0
        self.mean = np.zeros(embed_dim, dtype=np.float64)


class StreamingEstimator:
    """Per-class means plus one pooled scatter matrix, updated per sample.

    Parameters
    ----------
    embed_dim : size E of the incoming embedded vectors.
    mode : "pooled_within_class" centers each sample on its own class
        mean (the LDA covariance); "global" centers on the grand mean.
    pooled_unbiased : divide the scatter by (n - C) instead of (n - 1)
        in ``covariance``; only meaningful in pooled mode.
    track_scatter : set False for mean-only classifiers to skip the
        E x E accumulator entirely.
    """

    def __init__(
        self,
        embed_dim: int,
        mode: str = MODE_POOLED,
        pooled_unbiased: bool = False,
        track_scatter: bool = True,
    ):
        if embed_dim < 1:
            raise ConfigurationError(f"embed_dim must be >= 1, got {embed_dim}")
        if mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
        if pooled_unbiased and mode != MODE_POOLED:
            raise ConfigurationError(
                "the (n - C) normalizer applies to pooled_within_class mode only"
            )
        self.embed_dim = embed_dim
        self.mode = mode
        self.pooled_unbiased = pooled_unbiased
        self.track_scatter = track_scatter
        self.total_count = 0
        self._classes: dict[int, ClassStats] = {}
        self._grand_mean = np.zeros(embed_dim, dtype=np.float64)
        self._scatter = (
            np.zeros((embed_dim, embed_dim), dtype=np.float64, order="F")
            if track_scatter
            else None
        )
        self._consumed = False

    # -- streaming ---------------------------------------------------------

    def observe(self, phi: np.ndarray, label: int) -> None:
        """Fold one embedded sample into the running statistics."""
        if self._consumed:
            raise ModelStateError(
                "estimator state was consumed by covariance(copy=False); "
                "no further observations are possible"
            )
        phi = np.asarray(phi)
        if phi.ndim != 1 or phi.shape[0] != self.embed_dim:
            raise ShapeError(
                f"expected an embedding of length {self.embed_dim}, "
                f"got shape {phi.shape}"
            )
        if not np.isfinite(phi).all():
            raise DataError("embedded sample contains non-finite values")
        label = int(label)
        phi64 = phi.astype(np.float64)

        stats = self._classes.get(label)
        if stats is None:
            stats = self._classes[label] = ClassStats(label, self.embed_dim)

        if self.mode == MODE_POOLED:
            center, n_ref = stats.mean, stats.count
        else:
            center, n_ref = self._grand_mean, self.total_count

        delta = phi64 - center
        if n_ref > 0 and self.track_scatter:
            coef = n_ref / (n_ref + 1.0)
            dsyr(coef, delta, a=self._scatter, lower=0, overwrite_a=1)

        if self.mode == MODE_GLOBAL:
            self._grand_mean += delta / (self.total_count + 1)
            stats.mean += (phi64 - stats.mean) / (stats.count + 1)
        else:
            stats.mean += delta / (stats.count + 1)
        stats.count += 1
        self.total_count += 1

    # -- snapshots ----------------------------------------------------------

    @property
    def observe_count(self) -> int:
        """Total observe calls; augmented copies count individually."""
        return self.total_count

    @property
    def classes_seen(self) -> list[int]:
        return sorted(self._classes)

    def class_means(self) -> dict[int, np.ndarray]:
        """Snapshot of every per-class mean, keyed by observed labels only."""
        return {label: s.mean.copy() for label, s in self._classes.items()}

    def class_counts(self) -> dict[int, int]:
        return {label: s.count for label, s in self._classes.items()}

    def scatter(self) -> np.ndarray:
        """The pooled sum of squared deviations, as a full symmetric matrix."""
        self._require_scatter()
        return _mirror_upper(self._scatter.copy(order="F"))

    def covariance(self, copy: bool = True) -> np.ndarray:
        """scatter / (n - 1), or / (n - C) when pooled_unbiased is set.

        With copy=False the internal accumulator itself is symmetrized,
        scaled, and handed out; the estimator is then consumed and
        rejects further observe/covariance calls.  This is the
        constant-memory path used at the end of a one-pass run (peak
        stays at one 8*E^2-byte buffer).
        """
        self._require_scatter()
        denom = self.total_count - (
            len(self._classes) if self.pooled_unbiased else 1
        )
        if self.total_count < 2 or denom < 1:
            raise InsufficientDataError(
                f"covariance needs more samples: n={self.total_count}, "
                f"normalizer n-{'C' if self.pooled_unbiased else '1'}={denom}"
            )
        if copy:
            out = _mirror_upper(self._scatter.copy(order="F"))
        else:
            out = _mirror_upper(self._scatter)
            self._scatter = None
            self._consumed = True
        out /= denom
        return out

    def state_nbytes(self) -> int:
        """Bytes held by the statistics; constant once all classes are seen."""
        total = self._grand_mean.nbytes
        if self._scatter is not None:
            total += self._scatter.nbytes
        for s in self._classes.values():
            total += s.mean.nbytes + 16  # count + label
        return total

    def _require_scatter(self) -> None:
        if self._consumed:
            raise ModelStateError("estimator state was already consumed")
        if not self.track_scatter:
            raise ModelStateError("estimator was built with track_scatter=False")

    # -- checkpointing ------------------------------------------------------

    def _state(self) -> tuple[dict, dict[str, np.ndarray]]:
        labels = self.classes_seen
        meta = {
            "embed_dim": self.embed_dim,
            "mode": self.mode,
            "pooled_unbiased": self.pooled_unbiased,
            "track_scatter": self.track_scatter,
            "total_count": self.total_count,
        }
        arrays = {
            "class_labels": np.asarray(labels, dtype=np.int64),
            "class_counts": np.asarray(
                [self._classes[c].count for c in labels], dtype=np.int64
            ),
            "class_means": (
                np.stack([self._classes[c].mean for c in labels])
                if labels
                else np.zeros((0, self.embed_dim))
            ),
            "grand_mean": self._grand_mean,
        }
        if self.track_scatter:
            self._require_scatter()
            # Mirroring in place is safe: updates only ever write the upper
            # triangle, and every read re-mirrors it anyway.
            arrays["scatter"] = _mirror_upper(self._scatter)
        return meta, arrays

    def save(self, path) -> None:
        """Checkpoint counts, means, scatter, and mode for exact resume."""
        meta, arrays = self._state()
        data_io.write_checkpoint(path, {"kind": "estimator", **meta}, arrays)

    @classmethod
    def _from_state(cls, meta: dict, arrays: dict) -> "StreamingEstimator":
        est = cls(
            int(meta["embed_dim"]),
            mode=meta["mode"],
            pooled_unbiased=bool(meta["pooled_unbiased"]),
            track_scatter=bool(meta["track_scatter"]),
        )
        est.total_count = int(meta["total_count"])
        est._grand_mean = np.asarray(arrays["grand_mean"], dtype=np.float64)
        for i, label in enumerate(arrays["class_labels"]):
            stats = ClassStats(int(label), est.embed_dim)
            stats.count = int(arrays["class_counts"][i])
            stats.mean = np.asarray(arrays["class_means"][i], dtype=np.float64)
            est._classes[int(label)] = stats
        if est.track_scatter:
            est._scatter = np.asfortranarray(
                np.asarray(arrays["scatter"], dtype=np.float64)
            )
        return est

    @classmethod
    def load(cls, path) -> "StreamingEstimator":
        meta, arrays = data_io.read_checkpoint(path)
        if meta.get("kind") != "estimator":
            raise DataError(f"{path}: not an estimator checkpoint")
        return cls._from_state(meta, arrays)
