"""Single-pass, exemplar-free streaming classification.

Pipeline: a frozen random Fourier embedding, exact online class means
and pooled covariance, oracle-approximating shrinkage plus a ridge, and
Mahalanobis nearest-class-mean scoring, with a class-incremental
benchmark harness around it.
"""

from .classifier import (
    ModelVariant,
    RandomReluMap,
    RPSpec,
    StreamingClassifier,
    VARIANTS,
)
from .data_io import (
    DatasetDescriptor,
    LabeledSample,
    RawDataset,
    dataset_from_features,
    load_dataset,
    load_feature_file,
    write_feature_file,
)
from .errors import (
    ConfigurationError,
    DataError,
    DataFormatError,
    EmptyModelError,
    InsufficientDataError,
    ModelStateError,
    NumericalError,
    RanDumbError,
    ShapeError,
    SingularUpdateError,
    UnsupportedAugmentationError,
)
from .fourier import FeatureMap, FeatureMapSpec, sample_omegas
from .harness import (
    RunResult,
    StreamSpec,
    compute_accuracy,
    make_stream,
    run_ablation,
    run_benchmark,
    run_on_dataset,
    sweep_embedding,
)
from .precision import (
    PrecisionModel,
    ShrinkageResult,
    build_precision,
    oas_shrink,
    sherman_morrison_update,
)
from .reference import OracleReport, run_verify
from .streaming import StreamingEstimator

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DataError",
    "DataFormatError",
    "DatasetDescriptor",
    "EmptyModelError",
    "FeatureMap",
    "FeatureMapSpec",
    "InsufficientDataError",
    "LabeledSample",
    "ModelStateError",
    "ModelVariant",
    "NumericalError",
    "OracleReport",
    "PrecisionModel",
    "RanDumbError",
    "RandomReluMap",
    "RawDataset",
    "RPSpec",
    "RunResult",
    "ShapeError",
    "ShrinkageResult",
    "SingularUpdateError",
    "StreamSpec",
    "StreamingClassifier",
    "StreamingEstimator",
    "UnsupportedAugmentationError",
    "VARIANTS",
    "build_precision",
    "compute_accuracy",
    "dataset_from_features",
    "load_dataset",
    "load_feature_file",
    "make_stream",
    "oas_shrink",
    "run_ablation",
    "run_benchmark",
    "run_on_dataset",
    "run_verify",
    "sample_omegas",
    "sweep_embedding",
    "write_feature_file",
    "__version__",
]
