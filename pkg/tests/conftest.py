"""Shared fixtures: synthetic documents, planted-duplicate corpora, manifests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from corpus_distill.corpus import Document, count_tokens, save_manifest, write_shard

WORDS = (
    "the quick brown fox jumps over lazy dog river stone cloud market tuesday "
    "green paper window machine coffee signal harbor winter novel garden copper "
    "bridge lantern meadow quiet silver thunder velvet anchor birch canyon drift "
    "ember fable grain hollow ivory jasper kernel lumen mosaic nectar orchard "
    "prism quartz ripple saffron timber umber vessel willow zephyr basalt cipher"
).split()


def make_doc(doc_id: str, source: str, text: str, **extra) -> Document:
    return Document(id=doc_id, source=source, text=text, token_count=count_tokens(text), **extra)


def random_text(rng: np.random.Generator, n_words: int) -> str:
    return " ".join(WORDS[i] for i in rng.integers(0, len(WORDS), size=n_words))


def append_mutant(rng: np.random.Generator, base: str, n_chars: int) -> str:
    """A near-duplicate of ``base``: same text plus a short random suffix."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    suffix = "".join(letters[i] for i in rng.integers(0, len(letters), size=n_chars))
    return base + " " + suffix


def substring_set(text: str, k: int = 25) -> frozenset[str]:
    """Independent shingle-set oracle: raw k-char substrings, no hashing."""
    if not text:
        return frozenset()
    if len(text) < k:
        return frozenset([text])
    return frozenset(text[i : i + k] for i in range(len(text) - k + 1))


def substring_jaccard(a: str, b: str, k: int = 25) -> float:
    sa, sb = substring_set(a, k), substring_set(b, k)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def planted_corpus(
    rng: np.random.Generator,
    sources: list[str],
    n_background: int,
    group_sizes: list[int],
    *,
    base_words: int = 70,
    min_group_jaccard: float = 0.95,
) -> tuple[list[Document], list[list[str]]]:
    """Background docs plus duplicate groups (base + suffix mutants).

    Every within-group pair's exact substring Jaccard is checked against the
    independent oracle at generation time. Returns (documents, truth groups).
    """
    docs: list[Document] = []
    truth: list[list[str]] = []
    serial = 0

    def next_id(source: str) -> str:
        nonlocal serial
        serial += 1
        return f"{source}/doc{serial:05d}"

    for size in group_sizes:
        base = random_text(rng, base_words)
        texts = [base] + [append_mutant(rng, base, int(rng.integers(2, 7))) for _ in range(size - 1)]
        for a in range(len(texts)):
            for b in range(a + 1, len(texts)):
                assert substring_jaccard(texts[a], texts[b]) >= min_group_jaccard
        group_ids = []
        for text in texts:
            source = sources[int(rng.integers(0, len(sources)))]
            doc_id = next_id(source)
            docs.append(make_doc(doc_id, source, text))
            group_ids.append(doc_id)
        truth.append(group_ids)

    for _ in range(n_background):
        source = sources[int(rng.integers(0, len(sources)))]
        docs.append(make_doc(next_id(source), source, random_text(rng, base_words)))

    order = rng.permutation(len(docs))
    return [docs[i] for i in order], truth


def write_corpus(
    tmp_path: Path,
    docs_by_source: dict[str, list[Document]],
    *,
    tokenizer: str = "whitespace",
    shards_per_source: int = 1,
) -> Path:
    """Write per-source shards plus a manifest; returns the manifest path."""
    entries = []
    for name, docs in docs_by_source.items():
        src_dir = tmp_path / "shards" / name
        src_dir.mkdir(parents=True, exist_ok=True)
        chunks = np.array_split(np.arange(len(docs)), shards_per_source)
        for i, chunk in enumerate(chunks):
            write_shard([docs[j] for j in chunk], src_dir / f"{name}-{i:04d}.jsonl")
        entries.append((name, [f"shards/{name}/*.jsonl"]))
    manifest_path = tmp_path / "manifest.yaml"
    save_manifest(manifest_path, entries, tokenizer=tokenizer)
    return manifest_path


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)
