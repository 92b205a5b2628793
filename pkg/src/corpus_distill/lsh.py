"""Banded LSH over MinHash signatures: candidate duplicate-pair generation.

A signature of length ``bands * rows`` is split into ``bands`` contiguous
row slices; two documents become a candidate pair when any band hashes to
the same 64-bit key (FNV-1a over the band's values as little-endian bytes).
For exact Jaccard ``s`` the collision probability is the S-curve
``1 - (1 - s^rows)^bands``; the default 8x16 scheme puts the characteristic
threshold (1/8)^(1/16) near 0.88.

Candidate pairs are emitted in canonical form (lexicographically smaller id
first, no self pairs, each unordered pair once) with the number of bands
that collided. Buckets larger than ``bucket_cap`` are not enumerated
pairwise; they are reported whole as oversized buckets so downstream
clustering can union them as a single clique. Pair-spill files are
line-delimited ``doc_a<TAB>doc_b<TAB>colliding_bands`` records, sorted
ascending by (doc_a, doc_b).

With a ``spill_dir``, per-band key tables and the pair stream overflow to
sorted run files merged lazily, keeping memory bounded by the run buffer
rather than the corpus.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .corpus import Document
from .errors import DataError
from .fingerprint import (
    DEFAULT_SHINGLE_K,
    FNV_OFFSET,
    FNV_PRIME,
    MinHashSignature,
    exact_jaccard,
    shingle,
)

logger = logging.getLogger(__name__)

DEFAULT_BUCKET_CAP = 50_000

_U = np.uint64


@dataclass(frozen=True)
class BandingScheme:
    """Split of a signature into bands x rows; bands * rows must equal its length."""

    bands: int = 8
    rows: int = 16

    def __post_init__(self) -> None:
        if self.bands < 1 or self.rows < 1:
            raise DataError(f"bands and rows must be >= 1, got {self.bands}x{self.rows}")

    @property
    def signature_length(self) -> int:
        return self.bands * self.rows

    def check_compatible(self, sig_len: int) -> None:
        if sig_len != self.signature_length:
            raise DataError(
                f"banding scheme {self.bands}x{self.rows} needs signature length "
                f"{self.signature_length}, got {sig_len}"
            )


@dataclass(frozen=True)
class BandKey:
    band_index: int
    key: int


@dataclass(frozen=True)
class CandidatePair:
    """Canonical unordered pair: doc_a < doc_b lexicographically."""

    doc_a: str
    doc_b: str
    colliding_bands: int = 1

    def __post_init__(self) -> None:
        if self.doc_a >= self.doc_b:
            raise DataError(f"pair not canonical: {self.doc_a!r} >= {self.doc_b!r}")


def collision_probability(s: float, scheme: BandingScheme = BandingScheme()) -> float:
    """S-curve value 1 - (1 - s^rows)^bands."""
    return 1.0 - (1.0 - s**scheme.rows) ** scheme.bands


def characteristic_threshold(scheme: BandingScheme = BandingScheme()) -> float:
    """Similarity where collision probability crosses ~1/2: (1/bands)^(1/rows)."""
    return (1.0 / scheme.bands) ** (1.0 / scheme.rows)


def _band_key_matrix(values: np.ndarray, scheme: BandingScheme) -> np.ndarray:
    """Keys for a (n, signature_length) matrix -> (n, bands) uint64.

    Key i is FNV-1a over rows [i*rows, (i+1)*rows) serialized little-endian,
    so it depends on that slice only.
    """
    n = values.shape[0]
    raw = np.ascontiguousarray(values.astype("<u8")).view(np.uint8)
    raw = raw.reshape(n, scheme.bands, scheme.rows * 8)
    keys = np.full((n, scheme.bands), _U(FNV_OFFSET), dtype=np.uint64)
    prime = _U(FNV_PRIME)
    for j in range(raw.shape[2]):
        keys = (keys ^ raw[:, :, j].astype(np.uint64)) * prime
    return keys


def band_keys(sig: MinHashSignature, scheme: BandingScheme = BandingScheme()) -> list[BandKey]:
    """The signature's per-band bucket keys."""
    scheme.check_compatible(len(sig))
    keys = _band_key_matrix(sig.values[None, :], scheme)[0]
    return [BandKey(band_index=i, key=int(k)) for i, k in enumerate(keys)]


class _RunSpiller:
    """Accumulates lines, spilling sorted runs to disk; iterates them merged."""

    def __init__(self, directory: Path, tag: str, buffer_limit: int):
        self._dir = directory
        self._tag = tag
        self._limit = buffer_limit
        self._buffer: list[str] = []
        self._runs: list[Path] = []

    def add(self, line: str) -> None:
        self._buffer.append(line)
        if len(self._buffer) >= self._limit:
            self._flush()

    def _flush(self) -> None:
        if not self._buffer:
            return
        self._buffer.sort()
        run = self._dir / f"{self._tag}.run{len(self._runs):05d}"
        with open(run, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self._buffer))
            fh.write("\n")
        self._runs.append(run)
        self._buffer = []

    def iter_sorted(self) -> Iterator[str]:
        self._buffer.sort()
        if not self._runs:
            yield from self._buffer
            return
        self._flush()
        files = [open(r, "r", encoding="utf-8") for r in self._runs]
        try:
            for line in heapq.merge(*files):
                yield line.rstrip("\n")
        finally:
            for fh in files:
                fh.close()

    def cleanup(self) -> None:
        for run in self._runs:
            run.unlink(missing_ok=True)
        self._runs = []
        self._buffer = []


class LshIndex:
    """Build-then-query LSH index. Insert everything, finalize, then emit pairs."""

    def __init__(
        self,
        scheme: BandingScheme = BandingScheme(),
        *,
        bucket_cap: int = DEFAULT_BUCKET_CAP,
        spill_dir: str | Path | None = None,
        spill_buffer: int = 200_000,
    ):
        self.scheme = scheme
        self.bucket_cap = bucket_cap
        self._spill_dir = Path(spill_dir) if spill_dir is not None else None
        self._spill_buffer = spill_buffer
        self._ids: list[str] = []
        self._id_to_idx: dict[str, int] = {}
        self._seed: int | None = None
        self._finalized = False
        # per band: key -> list of doc indices (memory mode) or a run spiller
        self._tables: list[dict[int, list[int]]] | None = None
        self._band_spillers: list[_RunSpiller] | None = None
        if self._spill_dir is not None:
            self._spill_dir.mkdir(parents=True, exist_ok=True)
            self._band_spillers = [
                _RunSpiller(self._spill_dir, f"band{i:03d}", spill_buffer)
                for i in range(scheme.bands)
            ]
        else:
            self._tables = [{} for _ in range(scheme.bands)]
        self._pending_ids: list[str] = []
        self._pending_rows: list[np.ndarray] = []
        self.oversized_buckets: list[list[str]] = []

    def __len__(self) -> int:
        return len(self._ids) + len(self._pending_ids)

    def insert(self, doc_id: str, sig: MinHashSignature) -> None:
        if self._finalized:
            raise DataError("index already finalized; inserts are build-phase only")
        if not doc_id or any(ord(c) < 0x20 or ord(c) == 0x7F for c in doc_id):
            raise DataError(f"document id must be non-empty without control characters: {doc_id!r}")
        self.scheme.check_compatible(len(sig))
        if self._seed is None:
            self._seed = sig.seed
        elif sig.seed != self._seed:
            raise DataError(f"mixed signature seeds in one index ({self._seed} vs {sig.seed})")
        if doc_id in self._id_to_idx:
            raise DataError(f"duplicate document id in index: {doc_id!r}")
        self._id_to_idx[doc_id] = len(self._ids) + len(self._pending_ids)
        self._pending_ids.append(doc_id)
        self._pending_rows.append(sig.values)
        if len(self._pending_ids) >= 1024:
            self._flush_pending()

    def _flush_pending(self) -> None:
        if not self._pending_ids:
            return
        keys = _band_key_matrix(np.vstack(self._pending_rows), self.scheme)
        base = len(self._ids)
        self._ids.extend(self._pending_ids)
        if self._tables is not None:
            for band in range(self.scheme.bands):
                table = self._tables[band]
                for offset in range(keys.shape[0]):
                    table.setdefault(int(keys[offset, band]), []).append(base + offset)
        else:
            assert self._band_spillers is not None
            for band in range(self.scheme.bands):
                spiller = self._band_spillers[band]
                for offset, doc_id in enumerate(self._pending_ids):
                    spiller.add(f"{int(keys[offset, band]):016x}\t{doc_id}")
        self._pending_ids = []
        self._pending_rows = []

    def finalize(self) -> None:
        self._flush_pending()
        self._finalized = True

    def _iter_buckets(self) -> Iterator[list[str]]:
        """Buckets (as id lists) across all bands, deterministically ordered."""
        if self._tables is not None:
            for band in range(self.scheme.bands):
                for key in sorted(self._tables[band]):
                    idxs = self._tables[band][key]
                    if len(idxs) > 1:
                        yield sorted(self._ids[i] for i in idxs)
        else:
            assert self._band_spillers is not None
            for spiller in self._band_spillers:
                current_key: str | None = None
                bucket: list[str] = []
                for line in spiller.iter_sorted():
                    key, doc_id = line.split("\t", 1)
                    if key != current_key:
                        if len(bucket) > 1:
                            yield sorted(bucket)
                        current_key = key
                        bucket = []
                    bucket.append(doc_id)
                if len(bucket) > 1:
                    yield sorted(bucket)

    def candidate_pairs(self) -> Iterator[CandidatePair]:
        """All canonical candidate pairs with their colliding-band counts.

        Oversized buckets (size > bucket_cap) are recorded whole in
        ``self.oversized_buckets`` instead of being enumerated pairwise.
        """
        if not self._finalized:
            raise DataError("finalize the index before emitting pairs")
        self.oversized_buckets = []
        if self._spill_dir is None:
            counts: dict[tuple[str, str], int] = {}
            for bucket in self._iter_buckets():
                if len(bucket) > self.bucket_cap:
                    self.oversized_buckets.append(bucket)
                    continue
                for pair in itertools.combinations(bucket, 2):
                    counts[pair] = counts.get(pair, 0) + 1
            for doc_a, doc_b in sorted(counts):
                yield CandidatePair(doc_a, doc_b, counts[(doc_a, doc_b)])
        else:
            pair_spiller = _RunSpiller(self._spill_dir, "pairs", self._spill_buffer)
            for bucket in self._iter_buckets():
                if len(bucket) > self.bucket_cap:
                    self.oversized_buckets.append(bucket)
                    continue
                for doc_a, doc_b in itertools.combinations(bucket, 2):
                    pair_spiller.add(f"{doc_a}\t{doc_b}")
            current: tuple[str, str] | None = None
            count = 0
            for line in pair_spiller.iter_sorted():
                doc_a, doc_b = line.split("\t", 1)
                if (doc_a, doc_b) != current:
                    if current is not None:
                        yield CandidatePair(current[0], current[1], count)
                    current = (doc_a, doc_b)
                    count = 0
                count += 1
            if current is not None:
                yield CandidatePair(current[0], current[1], count)
            pair_spiller.cleanup()


def build_index(
    sigs: Iterable[tuple[str, MinHashSignature]],
    scheme: BandingScheme = BandingScheme(),
    **kwargs,
) -> LshIndex:
    """Build and finalize an index from an (id, signature) stream."""
    index = LshIndex(scheme, **kwargs)
    for doc_id, sig in sigs:
        index.insert(doc_id, sig)
    index.finalize()
    return index


def emit_candidate_pairs(index: LshIndex) -> Iterator[CandidatePair]:
    """Stream the index's candidate pairs (canonical, deduplicated across bands)."""
    return index.candidate_pairs()


def verify_pair(
    a: Document,
    b: Document,
    threshold: float,
    k: int = DEFAULT_SHINGLE_K,
) -> bool:
    """Exact shingle-set Jaccard check at ``threshold`` (both docs shingled at ``k``)."""
    return exact_jaccard(shingle(a.text, k), shingle(b.text, k)) >= threshold


def write_pair_spill(pairs: Iterable[CandidatePair], path: str | Path) -> int:
    """Write pairs to the documented spill format, sorted by (doc_a, doc_b)."""
    rows = sorted((p.doc_a, p.doc_b, p.colliding_bands) for p in pairs)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for doc_a, doc_b, bands in rows:
            fh.write(f"{doc_a}\t{doc_b}\t{bands}\n")
    os.replace(tmp, path)
    return len(rows)


def read_pair_spill(path: str | Path) -> Iterator[CandidatePair]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{line_no}: expected 3 tab-separated fields")
            yield CandidatePair(parts[0], parts[1], int(parts[2]))
