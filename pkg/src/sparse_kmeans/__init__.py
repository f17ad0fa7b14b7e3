"""Sparse spherical k-means with inverted-file and structured inverted-file backends."""

from .core import (
    BACKENDS,
    ClusterState,
    ConfigError,
    KMeansRun,
    KTooLarge,
    RunConfig,
    RunResult,
    assign_full,
    choose_seeds,
    init_centroids,
    run,
)
from .ingest import (
    CountMatrix,
    EmptyFile,
    InvalidSpec,
    NonAscendingIndex,
    ParseError,
    SynthSpec,
    generate_synthetic,
    load_sparse_text,
    save_sparse_text,
    tfidf_normalize,
)
from .inverted import (
    InvertedMeanFile,
    StructuredInvertedMeanFile,
    StructureMismatch,
    build_ivf,
    build_structured,
    ivf_assign,
    ivf_cbicp_assign,
    sivf_assign,
    sivf_update,
)
from .means import MeanSet, detect_invariant, objective, update_means
from .metrics import IterationMetrics, mem_estimate, pair_eval_count
from .sparse import (
    DenseMeanMatrix,
    SparseDataset,
    SparseVector,
    ZeroVector,
    dot_sparse_dense,
    dot_sparse_sparse,
    normalize_l2,
)

__version__ = "0.1.0"

__all__ = [
    "MeanSet",
    "detect_invariant",
    "objective",
    "update_means",
    "IterationMetrics",
    "mem_estimate",
    "pair_eval_count",
    "assign_full",
    "BACKENDS",
    "build_ivf",
    "build_structured",
    "choose_seeds",
    "ClusterState",
    "ConfigError",
    "CountMatrix",
    "DenseMeanMatrix",
    "dot_sparse_dense",
    "dot_sparse_sparse",
    "EmptyFile",
    "generate_synthetic",
    "init_centroids",
    "InvalidSpec",
    "InvertedMeanFile",
    "ivf_assign",
    "ivf_cbicp_assign",
    "KMeansRun",
    "KTooLarge",
    "load_sparse_text",
    "NonAscendingIndex",
    "normalize_l2",
    "ParseError",
    "run",
    "RunConfig",
    "RunResult",
    "save_sparse_text",
    "sivf_assign",
    "sivf_update",
    "SparseDataset",
    "SparseVector",
    "StructuredInvertedMeanFile",
    "StructureMismatch",
    "SynthSpec",
    "tfidf_normalize",
    "ZeroVector",
]
