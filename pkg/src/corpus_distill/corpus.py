"""Document model, line-delimited shard I/O, and corpus manifests.

Shard format: UTF-8 JSON objects, one per line, trailing newline at end of
file. Required fields: ``id``, ``text``, ``source``. Optional fields:
``token_count`` (int), ``edu_score`` (float), ``quality_score`` (float in
[0, 1]), ``quality_label`` (one of ``low``/``medium``/``high``). JSON string
escaping covers control characters, so embedded newlines round-trip.

A manifest is a YAML file listing sources in keep-priority order together
with shard globs (resolved relative to the manifest's directory) and the
tokenizer mode used for token accounting.
"""

from __future__ import annotations

import glob as _glob
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import yaml

from .errors import DataError, ResourceError

logger = logging.getLogger(__name__)

QUALITY_LABELS = ("low", "medium", "high")

TOKENIZER_WHITESPACE = "whitespace"
TOKENIZER_EXTERNAL = "external-counts"
TOKENIZERS = (TOKENIZER_WHITESPACE, TOKENIZER_EXTERNAL)

MALFORMED_SKIP = "skip"
MALFORMED_FAIL = "fail"


def count_tokens(text: str) -> int:
    """Token count of ``text``: maximal runs of Unicode whitespace separate tokens."""
    return len(text.split())


def _has_control_chars(s: str) -> bool:
    return any(ord(c) < 0x20 or ord(c) == 0x7F for c in s)


@dataclass(frozen=True)
class SourceId:
    """A corpus source and its keep-priority rank (1 = kept first)."""

    name: str
    rank: int

    def __post_init__(self) -> None:
        if not self.name:
            raise DataError("source name must be non-empty")
        if self.rank < 1:
            raise DataError(f"source {self.name!r}: rank must be >= 1, got {self.rank}")


@dataclass
class Document:
    """One corpus record. ``source`` holds the source name; ranks live in the manifest."""

    id: str
    source: str
    text: str
    token_count: int
    edu_score: float | None = None
    quality_score: float | None = None
    quality_label: str | None = None

    def __post_init__(self) -> None:
        if not self.id or _has_control_chars(self.id):
            raise DataError(f"document id must be non-empty without control characters: {self.id!r}")
        if not self.source:
            raise DataError(f"document {self.id}: source must be non-empty")
        if not isinstance(self.token_count, int) or self.token_count < 0:
            raise DataError(f"document {self.id}: token_count must be a non-negative integer")
        if self.quality_label is not None and self.quality_label not in QUALITY_LABELS:
            raise DataError(f"document {self.id}: bad quality_label {self.quality_label!r}")
        if self.quality_score is not None and not 0.0 <= float(self.quality_score) <= 1.0:
            raise DataError(f"document {self.id}: quality_score outside [0, 1]")

    def to_record(self) -> dict:
        rec = {"id": self.id, "source": self.source, "text": self.text, "token_count": self.token_count}
        if self.edu_score is not None:
            rec["edu_score"] = self.edu_score
        if self.quality_score is not None:
            rec["quality_score"] = self.quality_score
        if self.quality_label is not None:
            rec["quality_label"] = self.quality_label
        return rec


def _document_from_record(
    rec: dict,
    *,
    source: str | None,
    tokenizer: str,
    fallback_id: str,
) -> Document:
    if not isinstance(rec, dict):
        raise DataError("record is not an object")
    doc_id = rec.get("id", fallback_id)
    if not isinstance(doc_id, str):
        raise DataError("field 'id' must be a string")
    text = rec.get("text")
    if not isinstance(text, str):
        raise DataError("field 'text' missing or not a string")
    rec_source = rec.get("source", source)
    if not isinstance(rec_source, str) or not rec_source:
        raise DataError("field 'source' missing or not a string")
    if source is not None and rec_source != source:
        raise DataError(f"record source {rec_source!r} does not match shard source {source!r}")

    token_count = rec.get("token_count")
    if token_count is None:
        if tokenizer == TOKENIZER_EXTERNAL:
            raise DataError("field 'token_count' required in external-counts mode")
        token_count = count_tokens(text)
    elif not isinstance(token_count, int) or isinstance(token_count, bool) or token_count < 0:
        raise DataError("field 'token_count' must be a non-negative integer")

    def _opt_float(name: str) -> float | None:
        value = rec.get(name)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DataError(f"field {name!r} must be a number")
        return float(value)

    label = rec.get("quality_label")
    if label is not None and label not in QUALITY_LABELS:
        raise DataError(f"field 'quality_label' must be one of {QUALITY_LABELS}")

    return Document(
        id=doc_id,
        source=rec_source,
        text=text,
        token_count=token_count,
        edu_score=_opt_float("edu_score"),
        quality_score=_opt_float("quality_score"),
        quality_label=label,
    )


@dataclass
class IngestStats:
    """Counters collected while streaming a shard (or several)."""

    documents: int = 0
    malformed: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)
    max_recorded: int = 20

    def record_error(self, line_no: int, message: str) -> None:
        self.malformed += 1
        if len(self.errors) < self.max_recorded:
            self.errors.append((line_no, message))


def ingest_shard(
    path: str | Path,
    source: SourceId | str | None = None,
    *,
    tokenizer: str = TOKENIZER_WHITESPACE,
    on_malformed: str = MALFORMED_SKIP,
    stats: IngestStats | None = None,
    seen_ids: set[str] | None = None,
) -> Iterator[Document]:
    """Stream documents from one shard file, in file order.

    Records missing ``token_count`` get one assigned from the configured
    tokenizer. Records missing ``id`` get a synthesized
    ``<source>/<shard-stem>/<line>`` id. Malformed records are skipped and
    counted in ``stats`` by default, or fatal with ``on_malformed="fail"``.
    Duplicate ids are always fatal; pass one ``seen_ids`` set across shards
    to enforce uniqueness corpus-wide.
    """
    path = Path(path)
    if tokenizer not in TOKENIZERS:
        raise DataError(f"unknown tokenizer {tokenizer!r}")
    if on_malformed not in (MALFORMED_SKIP, MALFORMED_FAIL):
        raise DataError(f"unknown malformed-record policy {on_malformed!r}")
    if not path.is_file():
        raise ResourceError(f"shard file not found: {path}")
    source_name = source.name if isinstance(source, SourceId) else source
    if stats is None:
        stats = IngestStats()
    if seen_ids is None:
        seen_ids = set()

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fallback_id = f"{source_name or 'unknown'}/{path.stem}/{line_no}"
            try:
                rec = json.loads(line)
                doc = _document_from_record(
                    rec, source=source_name, tokenizer=tokenizer, fallback_id=fallback_id
                )
            except (json.JSONDecodeError, DataError) as exc:
                message = f"{path.name}:{line_no}: {exc}"
                if on_malformed == MALFORMED_FAIL:
                    raise DataError(message) from exc
                stats.record_error(line_no, str(exc))
                continue
            if doc.id in seen_ids:
                raise DataError(f"{path.name}:{line_no}: duplicate document id {doc.id!r}")
            seen_ids.add(doc.id)
            stats.documents += 1
            yield doc


def write_shard(docs: Iterable[Document], path: str | Path) -> int:
    """Write documents to ``path``; returns the count written.

    Writes through a temp file and renames on success, so a failed write
    never leaves a partial shard behind.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    count = 0
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            for doc in docs:
                fh.write(json.dumps(doc.to_record(), ensure_ascii=False))
                fh.write("\n")
                count += 1
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    os.replace(tmp, path)
    return count


@dataclass
class ManifestSource:
    source: SourceId
    shard_globs: list[str]
    shards: list[Path]


@dataclass
class CorpusManifest:
    """Sources in rank order plus their resolved shard paths."""

    sources: list[ManifestSource]
    tokenizer: str = TOKENIZER_WHITESPACE
    created_at: str | None = None

    def __post_init__(self) -> None:
        if not self.sources:
            raise DataError("manifest must list at least one source")
        names = [ms.source.name for ms in self.sources]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate source names in manifest: {names}")
        ranks = sorted(ms.source.rank for ms in self.sources)
        if ranks != list(range(1, len(ranks) + 1)):
            raise DataError(f"source ranks must be unique and contiguous from 1, got {ranks}")
        if self.tokenizer not in TOKENIZERS:
            raise DataError(f"unknown tokenizer {self.tokenizer!r}")
        self.sources = sorted(self.sources, key=lambda ms: ms.source.rank)

    @property
    def ranking(self) -> list[str]:
        """Source names ordered by keep priority (rank 1 first)."""
        return [ms.source.name for ms in self.sources]

    def source_by_name(self, name: str) -> ManifestSource:
        for ms in self.sources:
            if ms.source.name == name:
                return ms
        raise DataError(f"unknown source {name!r}; manifest has {self.ranking}")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        path = Path(path)
        if not path.is_file():
            raise ResourceError(f"manifest file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise DataError(f"manifest {path}: invalid YAML: {exc}") from exc
        if not isinstance(raw, dict) or not isinstance(raw.get("sources"), list):
            raise DataError(f"manifest {path}: expected a mapping with a 'sources' list")
        root = path.parent
        sources = []
        for pos, entry in enumerate(raw["sources"], start=1):
            if not isinstance(entry, dict) or "name" not in entry:
                raise DataError(f"manifest {path}: source entry {pos} must be a mapping with a 'name'")
            rank = entry.get("rank", pos)
            globs = entry.get("shards", [])
            if isinstance(globs, str):
                globs = [globs]
            if not isinstance(globs, list) or not all(isinstance(g, str) for g in globs):
                raise DataError(f"manifest {path}: source {entry['name']!r}: 'shards' must be glob strings")
            shards: list[Path] = []
            for pattern in globs:
                matches = sorted(_glob.glob(str(root / pattern)))
                if not matches:
                    raise ResourceError(
                        f"manifest {path}: source {entry['name']!r}: glob {pattern!r} matched no files"
                    )
                shards.extend(Path(m) for m in matches)
            sources.append(
                ManifestSource(
                    source=SourceId(name=str(entry["name"]), rank=int(rank)),
                    shard_globs=list(globs),
                    shards=shards,
                )
            )
        return cls(
            sources=sources,
            tokenizer=raw.get("tokenizer", TOKENIZER_WHITESPACE),
            created_at=raw.get("created_at"),
        )


def save_manifest(
    path: str | Path,
    sources: list[tuple[str, list[str]]],
    *,
    tokenizer: str = TOKENIZER_WHITESPACE,
    created_at: str | None = None,
) -> None:
    """Write a manifest listing ``(name, shard globs)`` pairs in rank order."""
    payload: dict = {
        "tokenizer": tokenizer,
        "sources": [
            {"name": name, "rank": rank, "shards": globs}
            for rank, (name, globs) in enumerate(sources, start=1)
        ],
    }
    if created_at is not None:
        payload["created_at"] = created_at
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=False), encoding="utf-8")
