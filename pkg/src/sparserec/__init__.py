"""Sparsity-augmented collaborative representation recognition toolkit."""

from .classifiers import (
    CrcOperator,
    SacrcConfig,
    crc_solve,
    knn1_classify,
    match_score,
    omp_solve,
    sacrc_classify,
    src_residual_classify,
)
from .core import (
    Dataset,
    Dictionary,
    FeatureVector,
    RepresentationResult,
    build_dictionary,
    dataset_from_arrays,
    validate_dataset,
)
from .evaluation import (
    EvalReport,
    ScoreRecord,
    ScoreSet,
    build_scoreset,
    compute_eer,
    compute_gmr_at_far,
    compute_roc,
    evaluate_verification,
    generate_synthetic,
    rank1_identification,
)
from .features import (
    ActivationTensor,
    StandardizationModel,
    fit_standardizer,
    flatten_activations,
    fuse,
    l2_normalize,
    standardize,
)
from .pca import PcaModel, pca_fit, pca_sweep, pca_transform, transform_dataset

__version__ = "0.1.0"

__all__ = [
    "ActivationTensor",
    "CrcOperator",
    "Dataset",
    "Dictionary",
    "EvalReport",
    "FeatureVector",
    "PcaModel",
    "RepresentationResult",
    "SacrcConfig",
    "ScoreRecord",
    "ScoreSet",
    "StandardizationModel",
    "build_dictionary",
    "build_scoreset",
    "compute_eer",
    "compute_gmr_at_far",
    "compute_roc",
    "crc_solve",
    "dataset_from_arrays",
    "evaluate_verification",
    "fit_standardizer",
    "flatten_activations",
    "fuse",
    "generate_synthetic",
    "knn1_classify",
    "l2_normalize",
    "match_score",
    "omp_solve",
    "pca_fit",
    "pca_sweep",
    "pca_transform",
    "rank1_identification",
    "sacrc_classify",
    "src_residual_classify",
    "standardize",
    "transform_dataset",
    "validate_dataset",
]
