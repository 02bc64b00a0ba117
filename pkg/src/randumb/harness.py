"""Class-incremental streams, the one-pass benchmark loop, metrics,
embedding sweeps, and ablation runs.

Protocol: classes are split into tasks following a class order; the
stream visits tasks in order, presenting each task's samples one at a
time in a seed-shuffled order (flipped copies, when enabled, follow
their originals on adjacent steps).  The model observes every element
exactly once, is finalized, and is then evaluated on the full test set.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import ModelVariant, RPSpec, StreamingClassifier, VARIANTS
from .data_io import (
    ORIGIN_FLIPPED,
    ORIGIN_ORIGINAL,
    DatasetDescriptor,
    LabeledSample,
    RawDataset,
    flip_horizontal,
    normalize,
    normalize_batch,
)
from .errors import (
    ConfigurationError,
    DataError,
    RanDumbError,
    UnsupportedAugmentationError,
)
from .fourier import GENERATOR_NAME, FeatureMapSpec, num_bases_for_embed_dim
from .streaming import MODE_POOLED

DEFAULT_MEMORY_CAP_BYTES = 16 * 1024**3

ABLATION_ORDER = ("randumb", "kernel_ncm", "slda", "ncm", "rp_relu")


@dataclass(frozen=True)
class StreamSpec:
    """How to serialize a train set into a class-incremental stream."""

    dataset: DatasetDescriptor
    classes_per_task: int = 1
    class_order: tuple[int, ...] | None = None
    augment: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.classes_per_task < 1:
            raise ConfigurationError(
                f"classes_per_task must be >= 1, got {self.classes_per_task}"
            )
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        order = self.class_order
        if order is None:
            order = tuple(range(self.dataset.num_classes))
            object.__setattr__(self, "class_order", order)
        else:
            object.__setattr__(self, "class_order", tuple(int(c) for c in order))
        if sorted(self.class_order) != list(range(self.dataset.num_classes)):
            raise ConfigurationError(
                f"class_order must be a permutation of 0..{self.dataset.num_classes - 1}"
            )
        if self.augment and self.dataset.kind != "images":
            raise UnsupportedAugmentationError(
                f"dataset {self.dataset.name} holds feature vectors; "
                f"flip augmentation needs unflattened images"
            )

    @property
    def tasks(self) -> tuple[tuple[int, ...], ...]:
        k = self.classes_per_task
        return tuple(
            self.class_order[i : i + k] for i in range(0, len(self.class_order), k)
        )


def make_stream(spec: StreamSpec, train_x: np.ndarray, train_y: np.ndarray):
    """Yield LabeledSamples in class-incremental order, one per step.

    Deterministic in spec.seed: one generator shuffles each task's
    indices in sequence.  Flip-augmented streams yield the flipped copy
    immediately after its original.
    """
    train_y = np.asarray(train_y)
    rng = np.random.default_rng(spec.seed)
    descriptor = spec.dataset
    is_images = descriptor.kind == "images"
    for task in spec.tasks:
        members = []
        for c in task:
            idx = np.flatnonzero(train_y == c)
            if len(idx) == 0:
                raise ConfigurationError(f"class {c} has no samples in the train set")
            members.append(idx)
        order = np.concatenate(members)
        rng.shuffle(order)
        for i in order:
            label = int(train_y[i])
            if is_images:
                yield LabeledSample(
                    normalize(train_x[i], descriptor), label, ORIGIN_ORIGINAL
                )
                if spec.augment:
                    yield LabeledSample(
                        normalize(flip_horizontal(train_x[i]), descriptor),
                        label,
                        ORIGIN_FLIPPED,
                    )
            else:
                yield LabeledSample(
                    np.asarray(train_x[i], dtype=np.float32), label, ORIGIN_ORIGINAL
                )


def compute_accuracy(predictions: np.ndarray, labels: np.ndarray):
    """Per-class and overall accuracy.

    Returns (per_class, sample_average, class_average): per-class is
    correct_c / count_c over the true labels; sample average is total
    correct / total count.  On class-balanced test sets the two
    averages coincide; both are reported.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise DataError(
            f"predictions and labels must be equal-length vectors, got "
            f"{predictions.shape} and {labels.shape}"
        )
    if len(labels) == 0:
        raise DataError("cannot score an empty evaluation set")
    per_class = {}
    for c in np.unique(labels):
        mask = labels == c
        per_class[int(c)] = float((predictions[mask] == c).mean())
    average = float((predictions == labels).mean())
    class_average = float(np.mean(list(per_class.values())))
    return per_class, average, class_average


@dataclass
class RunResult:
    """Everything one benchmark run produced, JSON-serializable."""

    config: dict
    per_class_accuracy: dict[int, float]
    average_accuracy: float
    class_average_accuracy: float
    wall_time_seconds: float
    peak_memory_estimate_bytes: int
    observe_count: int
    shrinkage_rho: float | None = None
    shrinkage_mu: float | None = None
    log_det: float | None = None
    intermediate: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {
            "config": self.config,
            "per_class_accuracy": {
                str(k): v for k, v in sorted(self.per_class_accuracy.items())
            },
            "average_accuracy": self.average_accuracy,
            "class_average_accuracy": self.class_average_accuracy,
            "wall_time_seconds": self.wall_time_seconds,
            "peak_memory_estimate_bytes": self.peak_memory_estimate_bytes,
            "observe_count": self.observe_count,
            "shrinkage_rho": self.shrinkage_rho,
            "shrinkage_mu": self.shrinkage_mu,
            "log_det": self.log_det,
        }
        if self.intermediate:
            out["intermediate"] = self.intermediate
        return out


def append_jsonl(result: RunResult, path) -> None:
    """Append one run as a single JSON line."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(result.to_json()) + "\n")


def _config_echo(stream_spec: StreamSpec, model_config: ModelVariant, eval_every: int):
    d = stream_spec.dataset
    emb = model_config.embedding
    echo = {
        "dataset": d.name,
        "input_dim": d.input_dim,
        "num_classes": d.num_classes,
        "train_count": d.train_count,
        "test_count": d.test_count,
        "normalization": {
            "channel_means": list(d.channel_means),
            "channel_stds": list(d.channel_stds),
        },
        "variant": model_config.variant,
        "state_dim": model_config.embed_dim,
        "ridge": model_config.ridge if model_config.needs_precision else None,
        "estimator_mode": model_config.estimator_mode,
        "pooled_unbiased": model_config.pooled_unbiased,
        "augment": stream_spec.augment,
        "classes_per_task": stream_spec.classes_per_task,
        "class_order": list(stream_spec.class_order),
        "stream_seed": stream_spec.seed,
        "feature_seed": emb.seed if emb is not None else None,
        "gamma": emb.gamma if isinstance(emb, FeatureMapSpec) else None,
        "num_bases": emb.num_bases if isinstance(emb, FeatureMapSpec) else None,
        "rng": GENERATOR_NAME,
        "numpy_version": np.__version__,
        "eval_every": eval_every,
    }
    return echo


def check_memory_cap(model_config: ModelVariant, cap_bytes: int) -> int:
    """Refuse covariance-tracking runs whose accumulator exceeds the cap."""
    if not model_config.needs_precision:
        return 0
    e = model_config.embed_dim
    needed = 8 * e * e
    if needed > cap_bytes:
        raise ConfigurationError(
            f"state dimension {e} needs 8*E^2 = {needed} bytes for the "
            f"float64 covariance accumulator, above the configured cap of "
            f"{cap_bytes} bytes; lower the embedding size or raise the cap"
        )
    return needed


def _evaluate(model: StreamingClassifier, test_flat: np.ndarray, test_y: np.ndarray):
    predictions = model.predict_batch(test_flat)
    return compute_accuracy(predictions, test_y)


def run_benchmark(
    stream_spec: StreamSpec,
    model_config: ModelVariant,
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    eval_every: int = 0,
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
) -> RunResult:
    """One full pass: stream -> finalize -> evaluate the whole test set.

    eval_every=k > 0 additionally snapshots test accuracy every k stream
    steps via a non-consuming finalize (this copies the covariance, so
    the transient footprint doubles); the default evaluates once at the
    end through the consuming, single-buffer path.
    """
    scatter_bytes = check_memory_cap(model_config, memory_cap_bytes)
    if stream_spec.dataset.input_dim != model_config.raw_input_dim:
        raise ConfigurationError(
            f"dataset feeds {stream_spec.dataset.input_dim}-dim inputs but the "
            f"model expects {model_config.raw_input_dim}"
        )
    started = time.perf_counter()
    model = StreamingClassifier(model_config)
    if stream_spec.dataset.kind == "images":
        test_flat = normalize_batch(test_x, stream_spec.dataset)
    else:
        test_flat = np.asarray(test_x, dtype=np.float32)
    test_y = np.asarray(test_y)

    intermediate = []
    steps = 0
    for sample in make_stream(stream_spec, train_x, train_y):
        try:
            model.observe(sample.features, sample.label)
        except RanDumbError as exc:
            raise exc.with_prefix(
                f"stream step {steps} (class {sample.label}, {sample.origin})"
            )
        steps += 1
        if eval_every > 0 and steps % eval_every == 0:
            model.finalize(consume=False)
            _, average, _ = _evaluate(model, test_flat, test_y)
            intermediate.append({"step": steps, "average_accuracy": average})

    # One-pass contract: every stream element hit observe exactly once,
    # and nothing else did.
    assert model.estimator.observe_count == steps

    state_bytes = model.estimator.state_nbytes()
    model.finalize(consume=eval_every == 0)
    per_class, average, class_average = _evaluate(model, test_flat, test_y)
    elapsed = time.perf_counter() - started

    peak = state_bytes + test_flat.nbytes + 256 * model_config.embed_dim * 4
    if eval_every > 0:
        peak += scatter_bytes  # the non-consuming finalize copies the matrix
    pm = model.precision
    return RunResult(
        config=_config_echo(stream_spec, model_config, eval_every),
        per_class_accuracy=per_class,
        average_accuracy=average,
        class_average_accuracy=class_average,
        wall_time_seconds=elapsed,
        peak_memory_estimate_bytes=int(peak),
        observe_count=steps,
        shrinkage_rho=model.shrinkage_rho,
        shrinkage_mu=model.shrinkage_mu,
        log_det=pm.log_det if pm is not None else None,
        intermediate=intermediate,
    )


# ---------------------------------------------------------------------------
# Config-level entry points (shared by the CLI)
# ---------------------------------------------------------------------------


def build_model_config(
    variant: str,
    descriptor: DatasetDescriptor,
    embed_dim: int,
    gamma: float,
    ridge: float | None,
    seed: int,
    estimator_mode: str = MODE_POOLED,
    pooled_unbiased: bool = False,
) -> ModelVariant:
    """Translate CLI-level knobs into a ModelVariant for one dataset."""
    if variant not in VARIANTS:
        raise ConfigurationError(
            f"unknown variant {variant!r}; expected one of {VARIANTS}"
        )
    if ridge is None:
        ridge = descriptor.default_ridge
    common = dict(
        ridge=ridge,
        estimator_mode=estimator_mode,
        pooled_unbiased=pooled_unbiased,
    )
    if variant in ("randumb", "kernel_ncm"):
        embedding = FeatureMapSpec(
            input_dim=descriptor.input_dim,
            num_bases=num_bases_for_embed_dim(embed_dim),
            gamma=gamma,
            seed=seed,
        )
        return ModelVariant(variant=variant, embedding=embedding, **common)
    if variant == "rp_relu":
        embedding = RPSpec(
            input_dim=descriptor.input_dim, output_dim=embed_dim, seed=seed
        )
        return ModelVariant(variant=variant, embedding=embedding, **common)
    return ModelVariant(variant=variant, input_dim=descriptor.input_dim, **common)


def run_on_dataset(
    data: RawDataset,
    variant: str = "randumb",
    embed_dim: int = 25000,
    gamma: float = 1.0,
    ridge: float | None = None,
    seed: int = 0,
    augment: bool | None = None,
    classes_per_task: int = 1,
    class_order: tuple[int, ...] | None = None,
    estimator_mode: str = MODE_POOLED,
    pooled_unbiased: bool = False,
    eval_every: int = 0,
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
) -> RunResult:
    """Run one benchmark from plain keyword settings.

    The embedding seed is the run seed itself; the stream shuffle uses
    seed + 1 so the two random choices never alias.  Augmentation and
    ridge default per dataset.
    """
    descriptor = data.descriptor
    if augment is None:
        augment = descriptor.flip_default
    stream_spec = StreamSpec(
        dataset=descriptor,
        classes_per_task=classes_per_task,
        class_order=class_order,
        augment=augment,
        seed=seed + 1,
    )
    model_config = build_model_config(
        variant,
        descriptor,
        embed_dim,
        gamma,
        ridge,
        seed,
        estimator_mode,
        pooled_unbiased,
    )
    return run_benchmark(
        stream_spec,
        model_config,
        data.train_x,
        data.train_y,
        data.test_x,
        data.test_y,
        eval_every=eval_every,
        memory_cap_bytes=memory_cap_bytes,
    )


def sweep_embedding(dims: list[int], data: RawDataset, **settings) -> list[RunResult]:
    """One run per embedding size with shared data, seed, and stream.

    Sizes must be even and non-descending (repeats allowed; repeated
    sizes reproduce identical results).
    """
    if not dims:
        raise ConfigurationError("sweep needs at least one embedding size")
    for a, b in zip(dims, dims[1:]):
        if b < a:
            raise ConfigurationError(f"sweep sizes must be non-descending, got {dims}")
    results = []
    for dim in dims:
        results.append(run_on_dataset(data, embed_dim=dim, **settings))
    return results


def run_ablation(
    data: RawDataset,
    variants: tuple[str, ...] = ABLATION_ORDER,
    **settings,
) -> list[RunResult]:
    """Run the requested variants over the identical stream."""
    results = []
    for variant in variants:
        results.append(run_on_dataset(data, variant=variant, **settings))
    return results


def sweep_table(results: list[RunResult]) -> str:
    """CSV rows (variant, state_dim, average, class_average) for a result list."""
    lines = ["variant,state_dim,average_accuracy,class_average_accuracy"]
    for r in results:
        lines.append(
            f"{r.config['variant']},{r.config['state_dim']},"
            f"{r.average_accuracy:.6f},{r.class_average_accuracy:.6f}"
        )
    return "\n".join(lines) + "\n"
