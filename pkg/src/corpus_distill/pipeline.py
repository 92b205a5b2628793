"""End-to-end pipeline: ingest, dedup stages, filter stages, reports.

Stage order is configurable; the default runs intra-source dedup, then
cross-source dedup, then model-based quality filtering, then edu-score
filtering, so deduplication always sees unfiltered sources. Every stage
reads the previous stage's shards and writes fresh ones under
``<out>/work/NN-<stage>/``; nothing lands under ``<out>/final`` or
``<out>/reports`` until the whole run succeeds, so a failed run leaves no
partial finals behind.

Reruns with the same config, seed, and inputs are byte-identical: the only
randomness is the MinHash seed, all iteration orders are fixed (manifest
rank order, sorted shard lists, sorted pair emission), and no output file
embeds timestamps or absolute paths.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
import yaml

from .cluster import (
    DuplicateCluster,
    KeeperPolicy,
    RemovalRecord,
    apply_dedup,
    assign_keepers,
    cluster_size_histogram,
    connected_components,
    write_histogram,
    write_removal_log,
)
from .corpus import (
    CorpusManifest,
    Document,
    IngestStats,
    ingest_shard,
    write_shard,
)
from .errors import CorpusDistillError, DataError, ResourceError
from .filtering import (
    MISSING_FAIL,
    POLICY_KEEP_HIGH,
    CommandScoreSource,
    FileScoreSource,
    FilterPolicy,
    attach_scores,
    filter_edu,
    filter_quality,
)
from .fingerprint import MinHashSignature, exact_jaccard, minhash, shingle
from .lsh import BandingScheme, CandidatePair, DEFAULT_BUCKET_CAP, LshIndex
from .report import StageAccounting, StageCell, write_accounting

logger = logging.getLogger(__name__)

STAGE_INGEST = "ingest"
STAGE_INTRA = "intra_dedup"
STAGE_CROSS = "cross_dedup"
STAGE_QUALITY = "quality_filter"
STAGE_EDU = "edu_filter"
DEFAULT_STAGES = (STAGE_INTRA, STAGE_CROSS, STAGE_QUALITY, STAGE_EDU)
KNOWN_STAGES = DEFAULT_STAGES


@dataclass
class QualityFilterConfig:
    policy: str = POLICY_KEEP_HIGH
    top_fraction: float | None = None
    applies_to: list[str] | None = None
    score_files: dict[str, str] = field(default_factory=dict)
    score_dir: str | None = None
    score_command: list[str] | None = None
    on_missing: str = MISSING_FAIL


@dataclass
class EduFilterConfig:
    min_score: int = 3
    applies_to: list[str] | None = None
    on_missing: str = MISSING_FAIL


@dataclass
class PipelineConfig:
    """Declarative description of one pipeline run."""

    manifest: str
    seed: int = 0
    shingle_k: int = 25
    num_perms: int = 128
    bands: int = 8
    rows: int = 16
    sources: list[str] | None = None
    ranking: list[str] | None = None
    stages: list[str] = field(default_factory=lambda: list(DEFAULT_STAGES))
    intra_sources: list[str] | None = None
    verify_threshold: float | None = None
    bucket_cap: int = DEFAULT_BUCKET_CAP
    parallelism: int = 1
    shard_size: int = 100_000
    on_malformed: str = "skip"
    quality: QualityFilterConfig | None = None
    edu: EduFilterConfig | None = None
    config_dir: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        for stage in self.stages:
            if stage not in KNOWN_STAGES:
                raise DataError(f"unknown stage {stage!r}; known: {list(KNOWN_STAGES)}")
        if len(set(self.stages)) != len(self.stages):
            raise DataError(f"stages must not repeat, got {self.stages}")
        if self.bands * self.rows != self.num_perms:
            raise DataError(
                f"bands x rows ({self.bands}x{self.rows}) must equal num_perms ({self.num_perms})"
            )
        if self.parallelism < 1:
            raise DataError("parallelism must be >= 1")
        if self.shard_size < 1:
            raise DataError("shard_size must be >= 1")

    @property
    def manifest_path(self) -> Path:
        return (self.config_dir / self.manifest).resolve()

    @property
    def scheme(self) -> BandingScheme:
        return BandingScheme(bands=self.bands, rows=self.rows)

    def canonical_dict(self) -> dict:
        payload = {
            "manifest": self.manifest,
            "seed": self.seed,
            "shingle_k": self.shingle_k,
            "num_perms": self.num_perms,
            "bands": self.bands,
            "rows": self.rows,
            "sources": self.sources,
            "ranking": self.ranking,
            "stages": self.stages,
            "intra_sources": self.intra_sources,
            "verify_threshold": self.verify_threshold,
            "bucket_cap": self.bucket_cap,
            "shard_size": self.shard_size,
            "on_malformed": self.on_malformed,
        }
        if self.quality is not None:
            payload["quality_filter"] = {
                "policy": self.quality.policy,
                "top_fraction": self.quality.top_fraction,
                "applies_to": self.quality.applies_to,
                "score_files": self.quality.score_files,
                "score_dir": self.quality.score_dir,
                "score_command": self.quality.score_command,
                "on_missing": self.quality.on_missing,
            }
        if self.edu is not None:
            payload["edu_filter"] = {
                "min_score": self.edu.min_score,
                "applies_to": self.edu.applies_to,
                "on_missing": self.edu.on_missing,
            }
        return payload

    def digest(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _take(d: object, keys: dict[str, object]) -> dict:
    if not isinstance(d, dict):
        raise DataError(f"expected a mapping, got {type(d).__name__}")
    unknown = set(d) - set(keys)
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    return {k: d.get(k, default) for k, default in keys.items()}


def config_from_dict(raw: dict, config_dir: str | Path = ".") -> PipelineConfig:
    if not isinstance(raw, dict) or "manifest" not in raw:
        raise DataError("config must be a mapping with at least a 'manifest' key")
    fields = _take(
        raw,
        {
            "manifest": None,
            "seed": 0,
            "shingle_k": 25,
            "num_perms": 128,
            "bands": 8,
            "rows": 16,
            "sources": None,
            "ranking": None,
            "stages": list(DEFAULT_STAGES),
            "intra_sources": None,
            "verify_threshold": None,
            "bucket_cap": DEFAULT_BUCKET_CAP,
            "parallelism": 1,
            "shard_size": 100_000,
            "on_malformed": "skip",
            "quality_filter": None,
            "edu_filter": None,
        },
    )
    quality_raw = fields.pop("quality_filter")
    edu_raw = fields.pop("edu_filter")
    quality = None
    if quality_raw is not None:
        q = _take(
            quality_raw,
            {
                "policy": POLICY_KEEP_HIGH,
                "top_fraction": None,
                "applies_to": None,
                "score_files": {},
                "score_dir": None,
                "score_command": None,
                "on_missing": MISSING_FAIL,
            },
        )
        quality = QualityFilterConfig(**q)
    edu = None
    if edu_raw is not None:
        e = _take(edu_raw, {"min_score": 3, "applies_to": None, "on_missing": MISSING_FAIL})
        edu = EduFilterConfig(**e)
    return PipelineConfig(quality=quality, edu=edu, config_dir=Path(config_dir), **fields)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ResourceError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise DataError(f"config {path}: invalid YAML: {exc}") from exc
    return config_from_dict(raw, config_dir=path.parent)


@dataclass
class DedupOutcome:
    kept: list[Document]
    removals: list[RemovalRecord]
    clusters: list[DuplicateCluster]
    histogram: dict[int, int]
    empty_fingerprint_ids: list[str]
    oversized_buckets: int = 0


def _signature_or_none(
    text: str, k: int, num_perms: int, seed: int
) -> tuple[MinHashSignature | None, np.ndarray | None]:
    ss = shingle(text, k)
    if ss.is_empty:
        return None, None
    return minhash(ss, num_perms=num_perms, seed=seed), ss.hashes


def _duplicate_clusters(
    sigs: list[tuple[str, MinHashSignature]],
    source_of: dict[str, str],
    policy: KeeperPolicy,
    scheme: BandingScheme,
    *,
    bucket_cap: int = DEFAULT_BUCKET_CAP,
    verify: Callable[[str, str], bool] | None = None,
) -> tuple[list[DuplicateCluster], int]:
    """LSH collisions -> (optionally verified) edges -> keeper-annotated clusters."""
    index = LshIndex(scheme, bucket_cap=bucket_cap)
    for doc_id, sig in sigs:
        index.insert(doc_id, sig)
    index.finalize()
    pairs: Iterable[CandidatePair] = index.candidate_pairs()
    if verify is not None:
        pairs = (p for p in pairs if verify(p.doc_a, p.doc_b))
    clusters = connected_components(pairs, cliques=index.oversized_buckets)
    clusters = assign_keepers(clusters, policy, source_of)
    return clusters, len(index.oversized_buckets)


def dedup_documents(
    docs: list[Document],
    *,
    ranking: list[str],
    shingle_k: int = 25,
    num_perms: int = 128,
    seed: int = 0,
    scheme: BandingScheme = BandingScheme(),
    verify_threshold: float | None = None,
    bucket_cap: int = DEFAULT_BUCKET_CAP,
) -> DedupOutcome:
    """In-memory dedup of a document list; the same graph logic the pipeline runs."""
    sigs: list[tuple[str, MinHashSignature]] = []
    shingle_hashes: dict[str, np.ndarray] = {}
    empty_ids: list[str] = []
    source_of: dict[str, str] = {}
    for doc in docs:
        source_of[doc.id] = doc.source
        sig, hashes = _signature_or_none(doc.text, shingle_k, num_perms, seed)
        if sig is None:
            empty_ids.append(doc.id)
            continue
        sigs.append((doc.id, sig))
        if verify_threshold is not None:
            shingle_hashes[doc.id] = hashes

    verify = None
    if verify_threshold is not None:
        from .fingerprint import ShingleSet

        def verify(a: str, b: str) -> bool:
            ja = ShingleSet(k=shingle_k, hashes=shingle_hashes[a])
            jb = ShingleSet(k=shingle_k, hashes=shingle_hashes[b])
            return exact_jaccard(ja, jb) >= verify_threshold

    policy = KeeperPolicy(ranking=tuple(ranking))
    clusters, oversized = _duplicate_clusters(
        sigs, source_of, policy, scheme, bucket_cap=bucket_cap, verify=verify
    )
    removals: list[RemovalRecord] = []
    kept = list(apply_dedup(iter(docs), clusters, source_of, on_removal=removals.append))
    return DedupOutcome(
        kept=kept,
        removals=removals,
        clusters=clusters,
        histogram=cluster_size_histogram(clusters),
        empty_fingerprint_ids=empty_ids,
        oversized_buckets=oversized,
    )


@dataclass
class PipelineResult:
    out_dir: Path
    accounting: StageAccounting
    stats: dict
    final_shards: dict[str, list[Path]]
    removal_logs: dict[str, Path]
    histograms: dict[str, Path]
    config_digest: str


class _ShardSet:
    """Per-source shard paths flowing between stages."""

    def __init__(self, shards: dict[str, list[Path]]):
        self.shards = shards

    def docs(self, source: str) -> Iterator[Document]:
        for path in self.shards[source]:
            yield from ingest_shard(path, source, on_malformed="fail")


def _write_source_shards(
    docs: Iterable[Document], directory: Path, source: str, shard_size: int
) -> tuple[list[Path], int, int]:
    """Write a doc stream as part-NNNNN shards; returns (paths, docs, tokens)."""
    directory.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    n_docs = 0
    n_tokens = 0
    buffer: list[Document] = []

    def flush() -> None:
        nonlocal buffer
        path = directory / f"{source}-part{len(paths):05d}.jsonl"
        write_shard(buffer, path)
        paths.append(path)
        buffer = []

    for doc in docs:
        buffer.append(doc)
        n_docs += 1
        n_tokens += doc.token_count
        if len(buffer) >= shard_size:
            flush()
    if buffer or not paths:
        flush()
    return paths, n_docs, n_tokens


def run_pipeline(config: PipelineConfig, out_dir: str | Path) -> PipelineResult:
    """Execute the configured stages; outputs land under ``out_dir``."""
    manifest = CorpusManifest.load(config.manifest_path)
    active = config.sources if config.sources is not None else manifest.ranking
    for name in active:
        manifest.source_by_name(name)
    ranking = config.ranking if config.ranking is not None else [
        s for s in manifest.ranking if s in active
    ]
    if set(ranking) != set(active):
        raise DataError(f"ranking {ranking} must cover exactly the active sources {active}")

    _validate_filter_inputs(config, active)

    out = Path(out_dir)
    work = out / "work"
    work.mkdir(parents=True, exist_ok=True)

    stats: dict = {}
    accounting = StageAccounting(ranking, [STAGE_INGEST] + list(config.stages))
    removal_logs: dict[str, Path] = {}
    histograms: dict[str, Path] = {}

    current = _ingest_stage(config, manifest, active, work / "00-ingest", accounting, stats)

    for idx, stage in enumerate(config.stages, start=1):
        stage_dir = work / f"{idx:02d}-{stage}"
        try:
            if stage in (STAGE_INTRA, STAGE_CROSS):
                current = _dedup_stage(
                    config, stage, ranking, current, stage_dir, accounting, stats,
                    removal_logs, histograms,
                )
            elif stage == STAGE_QUALITY:
                current = _quality_stage(config, ranking, current, stage_dir, accounting, stats)
            else:
                current = _edu_stage(config, ranking, current, stage_dir, accounting, stats)
        except CorpusDistillError as exc:
            raise type(exc)(f"stage {stage}: {exc}") from exc
        except OSError as exc:
            raise ResourceError(f"stage {stage}: {exc}") from exc

    # promote work outputs to finals only after every stage succeeded
    final_dir = out / "final"
    if final_dir.exists():
        shutil.rmtree(final_dir)
    final_shards: dict[str, list[Path]] = {}
    for source in ranking:
        src_dir = final_dir / source
        src_dir.mkdir(parents=True)
        final_shards[source] = []
        for path in current.shards[source]:
            dest = src_dir / path.name
            shutil.copyfile(path, dest)
            final_shards[source].append(dest)

    reports = out / "reports"
    logs = out / "logs"
    reports.mkdir(exist_ok=True)
    logs.mkdir(exist_ok=True)
    for tag, path in list(removal_logs.items()):
        dest = logs / path.name
        shutil.copyfile(path, dest)
        removal_logs[tag] = dest
    for tag, path in list(histograms.items()):
        dest = reports / path.name
        shutil.copyfile(path, dest)
        histograms[tag] = dest

    accounting.validate()
    write_accounting(accounting, reports / "accounting.json", reports / "accounting.txt")
    digest = config.digest()
    stats_payload = {"config_digest": digest, "stats": stats}
    (reports / "stats.json").write_text(
        json.dumps(stats_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    return PipelineResult(
        out_dir=out,
        accounting=accounting,
        stats=stats,
        final_shards=final_shards,
        removal_logs=removal_logs,
        histograms=histograms,
        config_digest=digest,
    )


def _validate_filter_inputs(config: PipelineConfig, active: list[str]) -> None:
    """Fail before any work if configured score inputs cannot be resolved."""
    if STAGE_QUALITY in config.stages and config.quality is not None:
        q = config.quality
        if q.policy != "passthrough" and q.score_command is None:
            for source in q.applies_to if q.applies_to is not None else active:
                if source in active:
                    _score_file_for(config, source)  # raises ResourceError if absent
    if STAGE_QUALITY in config.stages and config.quality is None:
        raise DataError("quality_filter stage configured without a quality_filter section")
    if STAGE_EDU in config.stages and config.edu is None:
        raise DataError("edu_filter stage configured without an edu_filter section")


def _score_file_for(config: PipelineConfig, source: str) -> Path:
    q = config.quality
    assert q is not None
    if source in q.score_files:
        path = (config.config_dir / q.score_files[source]).resolve()
    elif q.score_dir is not None:
        path = (config.config_dir / q.score_dir / f"{source}.scores.jsonl").resolve()
    else:
        raise ResourceError(f"no score file configured for source {source!r}")
    if not path.is_file():
        raise ResourceError(f"score file for source {source!r} not found: {path}")
    return path


def _ingest_stage(
    config: PipelineConfig,
    manifest: CorpusManifest,
    active: list[str],
    stage_dir: Path,
    accounting: StageAccounting,
    stats: dict,
) -> _ShardSet:
    seen_ids: set[str] = set()
    shards: dict[str, list[Path]] = {}
    ingest_stats: dict[str, dict] = {}
    for source in accounting.sources:
        ms = manifest.source_by_name(source)
        per_source = IngestStats()

        def docs() -> Iterator[Document]:
            for shard_path in ms.shards:
                logger.info("ingest %s: %s", source, shard_path.name)
                yield from ingest_shard(
                    shard_path,
                    ms.source,
                    tokenizer=manifest.tokenizer,
                    on_malformed=config.on_malformed,
                    stats=per_source,
                    seen_ids=seen_ids,
                )

        paths, n_docs, n_tokens = _write_source_shards(
            docs(), stage_dir / source, source, config.shard_size
        )
        shards[source] = paths
        accounting.record(
            source,
            STAGE_INGEST,
            StageCell(tokens_in=n_tokens, tokens_out=n_tokens, documents_in=n_docs, documents_out=n_docs),
        )
        ingest_stats[source] = {"documents": n_docs, "malformed": per_source.malformed}
    stats["ingest"] = ingest_stats
    return _ShardSet(shards)


def _shard_signatures(
    path: Path, source: str, config: PipelineConfig, keep_hashes: bool
) -> list[tuple[str, MinHashSignature | None, np.ndarray | None, str]]:
    out = []
    for doc in ingest_shard(path, source, on_malformed="fail"):
        sig, hashes = _signature_or_none(doc.text, config.shingle_k, config.num_perms, config.seed)
        out.append((doc.id, sig, hashes if keep_hashes else None, doc.source))
    return out


def _dedup_stage(
    config: PipelineConfig,
    stage: str,
    ranking: list[str],
    current: _ShardSet,
    stage_dir: Path,
    accounting: StageAccounting,
    stats: dict,
    removal_logs: dict[str, Path],
    histograms: dict[str, Path],
) -> _ShardSet:
    stage_dir.mkdir(parents=True, exist_ok=True)
    if stage == STAGE_INTRA:
        if config.intra_sources is None:
            groups = [[s] for s in ranking]
        else:
            for s in config.intra_sources:
                if s not in ranking:
                    raise DataError(f"intra_sources entry {s!r} is not an active source")
            groups = [[s] for s in ranking if s in config.intra_sources]
    else:
        groups = [list(ranking)]

    policy = KeeperPolicy(ranking=tuple(ranking))
    keep_hashes = config.verify_threshold is not None
    all_removals: list[RemovalRecord] = []
    removed_by_source: dict[str, tuple[str, int]] = {}
    empty_counts: dict[str, int] = {}
    stage_hist_paths: dict[str, Path] = {}
    oversized_total = 0

    source_of: dict[str, str] = {}
    removal_info: dict[str, DuplicateCluster] = {}

    for group in groups:
        sigs: list[tuple[str, MinHashSignature]] = []
        shingle_hashes: dict[str, np.ndarray] = {}
        shard_jobs = [(path, src) for src in group for path in current.shards[src]]
        if config.parallelism > 1 and len(shard_jobs) > 1:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                results = list(
                    pool.map(
                        lambda job: _shard_signatures(job[0], job[1], config, keep_hashes),
                        shard_jobs,
                    )
                )
        else:
            results = [_shard_signatures(p, s, config, keep_hashes) for p, s in shard_jobs]
        for rows in results:
            for doc_id, sig, hashes, src in rows:
                source_of[doc_id] = src
                if sig is None:
                    empty_counts[src] = empty_counts.get(src, 0) + 1
                    continue
                sigs.append((doc_id, sig))
                if keep_hashes:
                    shingle_hashes[doc_id] = hashes

        verify = None
        if config.verify_threshold is not None:
            from .fingerprint import ShingleSet

            def verify(a: str, b: str) -> bool:
                ja = ShingleSet(k=config.shingle_k, hashes=shingle_hashes[a])
                jb = ShingleSet(k=config.shingle_k, hashes=shingle_hashes[b])
                return exact_jaccard(ja, jb) >= config.verify_threshold

        clusters, oversized = _duplicate_clusters(
            sigs, source_of, policy, config.scheme,
            bucket_cap=config.bucket_cap, verify=verify,
        )
        oversized_total += oversized
        group_tag = group[0] if stage == STAGE_INTRA else "all"
        for cluster in clusters:
            for member in cluster.members:
                if member != cluster.keeper:
                    removal_info[member] = cluster

        hist = cluster_size_histogram(clusters)
        hist_name = (
            f"cluster_sizes.{stage}.{group_tag}.tsv" if stage == STAGE_INTRA
            else f"cluster_sizes.{stage}.tsv"
        )
        hist_path = stage_dir / hist_name
        write_histogram(hist, hist_path)
        stage_hist_paths[hist_name] = hist_path

    # second pass: stream every source, dropping non-keepers
    shards: dict[str, list[Path]] = {}
    for source in ranking:
        in_docs = 0
        in_tokens = 0

        def kept_docs() -> Iterator[Document]:
            nonlocal in_docs, in_tokens
            for doc in current.docs(source):
                in_docs += 1
                in_tokens += doc.token_count
                cluster = removal_info.get(doc.id)
                if cluster is None:
                    yield doc
                    continue
                all_removals.append(
                    RemovalRecord(
                        removed_id=doc.id,
                        keeper_id=cluster.keeper,
                        cluster_size=cluster.size,
                        source_removed=doc.source,
                        source_kept=source_of[cluster.keeper],
                    )
                )

        paths, out_docs, out_tokens = _write_source_shards(
            kept_docs(), stage_dir / source, source, config.shard_size
        )
        shards[source] = paths
        accounting.record(
            source,
            stage,
            StageCell(
                tokens_in=in_tokens,
                tokens_out=out_tokens,
                documents_in=in_docs,
                documents_out=out_docs,
            ),
        )

    log_path = stage_dir / f"{stage}.removals.jsonl"
    write_removal_log(all_removals, log_path)
    removal_logs[stage] = log_path
    histograms.update(stage_hist_paths)
    stats.setdefault("empty_fingerprint", {})[stage] = dict(sorted(empty_counts.items()))
    stats.setdefault("oversized_buckets", {})[stage] = oversized_total
    stats.setdefault("removed_documents", {})[stage] = len(all_removals)
    return _ShardSet(shards)


def _quality_stage(
    config: PipelineConfig,
    ranking: list[str],
    current: _ShardSet,
    stage_dir: Path,
    accounting: StageAccounting,
    stats: dict,
) -> _ShardSet:
    q = config.quality
    assert q is not None
    applies_to = set(q.applies_to) if q.applies_to is not None else set(ranking)
    policy = FilterPolicy(
        kind=q.policy,
        top_fraction=q.top_fraction,
        applies_to=frozenset(applies_to),
    )
    shards: dict[str, list[Path]] = {}
    removed_stats: dict[str, dict[str, int]] = {}
    for source in ranking:
        in_docs = 0
        in_tokens = 0

        def counted(docs: Iterator[Document]) -> Iterator[Document]:
            nonlocal in_docs, in_tokens
            for doc in docs:
                in_docs += 1
                in_tokens += doc.token_count
                yield doc

        stream: Iterator[Document] = counted(current.docs(source))
        score_source = None
        removed: dict[str, int] = {}
        if source in applies_to and policy.kind != "passthrough":
            if q.score_command is not None:
                score_source = CommandScoreSource(q.score_command)
            else:
                score_source = FileScoreSource(_score_file_for(config, source))
            stream = attach_scores(stream, score_source, on_missing=q.on_missing)
            stream = filter_quality(stream, policy, on_missing=q.on_missing, removed_counts=removed)
        paths, out_docs, out_tokens = _write_source_shards(
            stream, stage_dir / source, source, config.shard_size
        )
        if score_source is not None:
            unmatched = score_source.unmatched_ids()
            if unmatched:
                logger.warning(
                    "%s: %d scored ids never appeared in the corpus (first: %s)",
                    source, len(unmatched), unmatched[0],
                )
                removed_stats.setdefault(source, {})["unmatched_score_ids"] = len(unmatched)
            score_source.close()
        shards[source] = paths
        if removed:
            removed_stats.setdefault(source, {}).update(dict(sorted(removed.items())))
        accounting.record(
            source,
            STAGE_QUALITY,
            StageCell(
                tokens_in=in_tokens, tokens_out=out_tokens,
                documents_in=in_docs, documents_out=out_docs,
            ),
        )
    stats["quality_filter_removed"] = removed_stats
    return _ShardSet(shards)


def _edu_stage(
    config: PipelineConfig,
    ranking: list[str],
    current: _ShardSet,
    stage_dir: Path,
    accounting: StageAccounting,
    stats: dict,
) -> _ShardSet:
    e = config.edu
    assert e is not None
    applies_to = set(e.applies_to) if e.applies_to is not None else set(ranking)
    shards: dict[str, list[Path]] = {}
    removed_stats: dict[str, int] = {}
    for source in ranking:
        in_docs = 0
        in_tokens = 0

        def counted(docs: Iterator[Document]) -> Iterator[Document]:
            nonlocal in_docs, in_tokens
            for doc in docs:
                in_docs += 1
                in_tokens += doc.token_count
                yield doc

        stream: Iterator[Document] = counted(current.docs(source))
        removed: dict[str, int] = {}
        if source in applies_to:
            stream = filter_edu(
                stream,
                e.min_score,
                applies_to={source},
                on_missing=e.on_missing,
                removed_counts=removed,
            )
        paths, out_docs, out_tokens = _write_source_shards(
            stream, stage_dir / source, source, config.shard_size
        )
        shards[source] = paths
        if removed:
            removed_stats[source] = removed.get("below_threshold", 0)
        accounting.record(
            source,
            STAGE_EDU,
            StageCell(
                tokens_in=in_tokens, tokens_out=out_tokens,
                documents_in=in_docs, documents_out=out_docs,
            ),
        )
    stats["edu_filter_removed"] = removed_stats
    return _ShardSet(shards)
