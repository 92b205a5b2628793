"""corpus-distill: fuzzy dedup, quality filtering, and token accounting for text corpora."""

__version__ = "0.1.0"

from .cluster import (
    DuplicateCluster,
    KeeperPolicy,
    RemovalRecord,
    apply_dedup,
    assign_keepers,
    cluster_size_histogram,
    connected_components,
    select_keeper,
)
from .corpus import (
    CorpusManifest,
    Document,
    SourceId,
    count_tokens,
    ingest_shard,
    write_shard,
)
from .errors import CorpusDistillError, DataError, ResourceError
from .filtering import (
    FilterPolicy,
    ScoreRecord,
    attach_scores,
    filter_edu,
    filter_quality,
)
from .fingerprint import (
    MinHashSignature,
    ShingleSet,
    estimate_jaccard,
    exact_jaccard,
    minhash,
    minhash_text,
    shingle,
)
from .lsh import (
    BandingScheme,
    CandidatePair,
    LshIndex,
    band_keys,
    build_index,
    collision_probability,
    emit_candidate_pairs,
    verify_pair,
)
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    dedup_documents,
    load_config,
    run_pipeline,
)
from .report import (
    MixtureSpec,
    StageAccounting,
    StageCell,
    compute_mixture,
    equalized_targets,
    render_accounting,
)

__all__ = [
    "BandingScheme",
    "CandidatePair",
    "CorpusDistillError",
    "CorpusManifest",
    "DataError",
    "Document",
    "DuplicateCluster",
    "FilterPolicy",
    "KeeperPolicy",
    "LshIndex",
    "MinHashSignature",
    "MixtureSpec",
    "PipelineConfig",
    "PipelineResult",
    "RemovalRecord",
    "ResourceError",
    "ScoreRecord",
    "ShingleSet",
    "SourceId",
    "StageAccounting",
    "StageCell",
    "apply_dedup",
    "assign_keepers",
    "attach_scores",
    "band_keys",
    "build_index",
    "cluster_size_histogram",
    "collision_probability",
    "compute_mixture",
    "connected_components",
    "count_tokens",
    "dedup_documents",
    "emit_candidate_pairs",
    "equalized_targets",
    "estimate_jaccard",
    "exact_jaccard",
    "filter_edu",
    "filter_quality",
    "ingest_shard",
    "load_config",
    "minhash",
    "minhash_text",
    "render_accounting",
    "run_pipeline",
    "select_keeper",
    "shingle",
    "verify_pair",
    "write_shard",
]
