"""Model-based quality filtering and educational-score filtering.

The classifier itself lives behind a score source: either a score file
(line-delimited JSON records ``{"id", "score", "label"}``, one per
document, same escaping rules as shards) or a scoring command that speaks
the sidecar protocol (one JSON request ``{"id", "text"}`` per line on
stdin, one JSON response per line on stdout, order preserving).

Filter policies operate on the attached labels/scores only. Documents
whose source is outside a policy's ``applies_to`` set pass through
untouched. Counters returned alongside a filtered stream are complete once
the stream is exhausted.
"""

from __future__ import annotations

import json
import logging
import math
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .corpus import QUALITY_LABELS, Document
from .errors import DataError, ResourceError

logger = logging.getLogger(__name__)

POLICY_KEEP_HIGH = "keep_high"
POLICY_REMOVE_LOW = "remove_low"
POLICY_EDU_THRESHOLD = "edu_threshold"
POLICY_TOP_FRACTION = "top_fraction"
POLICY_PASSTHROUGH = "passthrough"
POLICY_KINDS = (
    POLICY_KEEP_HIGH,
    POLICY_REMOVE_LOW,
    POLICY_EDU_THRESHOLD,
    POLICY_TOP_FRACTION,
    POLICY_PASSTHROUGH,
)

MISSING_FAIL = "fail"
MISSING_PASSTHROUGH = "passthrough"


def round_half_up(x: float) -> int:
    """Integer rounding with halves going up: 2.5 -> 3."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ScoreRecord:
    id: str
    score: float
    label: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise DataError(f"score for {self.id!r} outside [0, 1]: {self.score}")
        if self.label not in QUALITY_LABELS:
            raise DataError(f"bad label for {self.id!r}: {self.label!r}")


@dataclass(frozen=True)
class FilterPolicy:
    """What to keep. ``applies_to`` of None means every source."""

    kind: str
    edu_min_integer_score: int = 3
    top_fraction: float | None = None
    applies_to: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise DataError(f"unknown filter policy {self.kind!r}")
        if self.kind == POLICY_TOP_FRACTION:
            if self.top_fraction is None or not 0.0 < self.top_fraction <= 1.0:
                raise DataError("top_fraction policy needs a fraction in (0, 1]")

    def covers(self, source: str) -> bool:
        return self.applies_to is None or source in self.applies_to


def load_score_file(path: str | Path) -> dict[str, ScoreRecord]:
    path = Path(path)
    if not path.is_file():
        raise ResourceError(f"score file not found: {path}")
    scores: dict[str, ScoreRecord] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                rec = json.loads(line)
                record = ScoreRecord(id=rec["id"], score=float(rec["score"]), label=rec["label"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, DataError) as exc:
                raise DataError(f"{path.name}:{line_no}: bad score record: {exc}") from exc
            if record.id in scores:
                raise DataError(f"{path.name}:{line_no}: duplicate score for id {record.id!r}")
            scores[record.id] = record
    return scores


class FileScoreSource:
    """Scores preloaded from one or more score files."""

    def __init__(self, paths: Iterable[str | Path] | str | Path):
        if isinstance(paths, (str, Path)):
            paths = [paths]
        self._scores: dict[str, ScoreRecord] = {}
        for path in paths:
            for doc_id, record in load_score_file(path).items():
                if doc_id in self._scores:
                    raise DataError(f"duplicate score for id {doc_id!r} across score files")
                self._scores[doc_id] = record
        self._used: set[str] = set()

    def get(self, doc: Document) -> ScoreRecord | None:
        record = self._scores.get(doc.id)
        if record is not None:
            self._used.add(doc.id)
        return record

    def unmatched_ids(self) -> list[str]:
        """Ids present in the score files but never requested."""
        return sorted(set(self._scores) - self._used)

    def close(self) -> None:
        pass


class CommandScoreSource:
    """Scores obtained live from a sidecar process speaking the line protocol."""

    def __init__(self, command: list[str], *, retries: int = 2, retry_delay: float = 0.5):
        self._command = list(command)
        self._retries = retries
        self._retry_delay = retry_delay
        self._proc: subprocess.Popen | None = None

    def _ensure_started(self) -> subprocess.Popen:
        if self._proc is not None and self._proc.poll() is None:
            return self._proc
        last: Exception | None = None
        for attempt in range(self._retries + 1):
            try:
                self._proc = subprocess.Popen(
                    self._command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                )
                return self._proc
            except OSError as exc:
                last = exc
                if attempt < self._retries:
                    time.sleep(self._retry_delay)
        raise ResourceError(f"scoring service {self._command[0]!r} unreachable: {last}") from last

    def get(self, doc: Document) -> ScoreRecord | None:
        proc = self._ensure_started()
        assert proc.stdin is not None and proc.stdout is not None
        try:
            proc.stdin.write(json.dumps({"id": doc.id, "text": doc.text}, ensure_ascii=False) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ResourceError(f"scoring service died mid-stream: {exc}") from exc
        if not line:
            raise ResourceError("scoring service closed its output stream")
        rec = json.loads(line)
        if "error" in rec:
            raise DataError(f"scoring service rejected {doc.id!r}: {rec['error']}")
        return ScoreRecord(id=rec["id"], score=float(rec["score"]), label=rec["label"])

    def unmatched_ids(self) -> list[str]:
        return []

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)
            self._proc = None


@dataclass
class AttachStats:
    attached: int = 0
    missing: int = 0
    missing_ids: list[str] = field(default_factory=list)

    def record_missing(self, doc_id: str) -> None:
        self.missing += 1
        if len(self.missing_ids) < 20:
            self.missing_ids.append(doc_id)


def attach_scores(
    docs: Iterable[Document],
    source,
    *,
    on_missing: str = MISSING_FAIL,
    stats: AttachStats | None = None,
) -> Iterator[Document]:
    """Annotate documents with quality_score/quality_label from a score source.

    Unscored documents are fatal under ``on_missing="fail"`` and flagged but
    passed through unscored under ``"passthrough"``.
    """
    if on_missing not in (MISSING_FAIL, MISSING_PASSTHROUGH):
        raise DataError(f"unknown missing-score policy {on_missing!r}")
    if stats is None:
        stats = AttachStats()
    for doc in docs:
        record = source.get(doc)
        if record is None:
            if on_missing == MISSING_FAIL:
                raise DataError(f"no score for document {doc.id!r}")
            stats.record_missing(doc.id)
            yield doc
            continue
        doc.quality_score = record.score
        doc.quality_label = record.label
        stats.attached += 1
        yield doc


def filter_quality(
    docs: Iterable[Document],
    policy: FilterPolicy,
    *,
    on_missing: str = MISSING_FAIL,
    removed_counts: dict[str, int] | None = None,
) -> Iterator[Document]:
    """Apply a label policy; yields kept docs, counting removals per label.

    ``keep_high`` keeps exactly label == high; ``remove_low`` removes exactly
    label == low; ``top_fraction`` keeps the top fraction by quality_score
    (materializes covered documents). Out-of-scope documents always pass.
    """
    if removed_counts is None:
        removed_counts = {}
    if policy.kind == POLICY_EDU_THRESHOLD:
        raise DataError("use filter_edu for the edu_threshold policy")
    if policy.kind == POLICY_TOP_FRACTION:
        yield from _filter_top_fraction(docs, policy, removed_counts)
        return
    for doc in docs:
        if policy.kind == POLICY_PASSTHROUGH or not policy.covers(doc.source):
            yield doc
            continue
        label = doc.quality_label
        if label is None:
            if on_missing == MISSING_FAIL:
                raise DataError(f"document {doc.id!r} has no quality_label")
            yield doc
            continue
        if policy.kind == POLICY_KEEP_HIGH:
            keep = label == "high"
        else:  # remove_low
            keep = label != "low"
        if keep:
            yield doc
        else:
            removed_counts[label] = removed_counts.get(label, 0) + 1


def _filter_top_fraction(
    docs: Iterable[Document],
    policy: FilterPolicy,
    removed_counts: dict[str, int],
) -> Iterator[Document]:
    buffered = list(docs)
    covered = [d for d in buffered if policy.covers(d.source)]
    scored = [d for d in covered if d.quality_score is not None]
    if len(scored) != len(covered):
        missing = next(d.id for d in covered if d.quality_score is None)
        raise DataError(f"document {missing!r} has no quality_score")
    keep_n = math.ceil(len(scored) * (policy.top_fraction or 0.0))
    ranked = sorted(scored, key=lambda d: (-d.quality_score, d.id))
    kept_ids = {d.id for d in ranked[:keep_n]}
    for doc in buffered:
        if not policy.covers(doc.source) or doc.id in kept_ids:
            yield doc
        else:
            label = doc.quality_label or "medium"
            removed_counts[label] = removed_counts.get(label, 0) + 1


def filter_edu(
    docs: Iterable[Document],
    min_integer_score: int = 3,
    *,
    applies_to: frozenset[str] | set[str] | None = None,
    on_missing: str = MISSING_FAIL,
    removed_counts: dict[str, int] | None = None,
) -> Iterator[Document]:
    """Keep documents whose edu_score rounds (half up) to >= ``min_integer_score``.

    Only documents from ``applies_to`` sources are filtered (None = all).
    """
    if removed_counts is None:
        removed_counts = {}
    for doc in docs:
        if applies_to is not None and doc.source not in applies_to:
            yield doc
            continue
        if doc.edu_score is None:
            if on_missing == MISSING_FAIL:
                raise DataError(f"document {doc.id!r} has no edu_score")
            yield doc
            continue
        if round_half_up(doc.edu_score) >= min_integer_score:
            yield doc
        else:
            removed_counts["below_threshold"] = removed_counts.get("below_threshold", 0) + 1
