"""Character shingling and MinHash signatures.

All hashing here is fixed and platform independent, so independently
produced signatures are comparable byte for byte:

* Shingles are contiguous runs of ``k`` Unicode code points (default 25),
  taken without any normalization. Text shorter than ``k`` yields a single
  whole-text shingle; empty text yields an empty set.
* Each shingle is hashed straight to 64 bits with FNV-1a applied to the
  shingle's UTF-32LE encoding (offset basis 0xcbf29ce484222325, prime
  0x100000001b3). Shingle strings are never materialized.
* Signature position ``i`` is ``min((a_i * x + b_i) mod (2^61 - 1))`` over
  the shingle hashes ``x`` (reduced mod 2^61 - 1), a standard
  pairwise-independent permutation family. The coefficients are drawn from
  a Philox counter-based stream keyed by the signature seed: ``a_i`` is the
  i-th draw from ``integers(1, 2^61 - 1)`` and ``b_i`` the i-th from
  ``integers(0, 2^61 - 1)``.

The optional signature cache is a binary file: an 8-byte magic ``CDSC\\x01``
plus 3 reserved bytes and a u32 for the signature length, then per record a
u32 id byte-length, the UTF-8 id bytes, a u64 seed, and ``num_perms`` u64
signature values. All integers little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError

DEFAULT_SHINGLE_K = 25
DEFAULT_NUM_PERMS = 128

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MERSENNE_PRIME_61 = (1 << 61) - 1

_U = np.uint64
_P61 = _U(MERSENNE_PRIME_61)
_MASK31 = _U((1 << 31) - 1)

_CACHE_MAGIC = b"CDSC\x01\x00\x00\x00"


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    """Reference scalar FNV-1a (64-bit). The vectorized paths must match this."""
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class ShingleSet:
    """Hashed character k-gram set of one document."""

    k: int
    hashes: np.ndarray  # uint64, sorted, unique

    def __post_init__(self) -> None:
        if self.k < 1:
            raise DataError(f"shingle size must be >= 1, got {self.k}")

    def __len__(self) -> int:
        return int(self.hashes.size)

    @property
    def is_empty(self) -> bool:
        return self.hashes.size == 0


@dataclass(frozen=True)
class MinHashSignature:
    """Fixed-length vector of permutation minima; comparable only at equal seed."""

    values: np.ndarray  # uint64, length num_perms
    seed: int

    def __len__(self) -> int:
        return int(self.values.size)


def _shingle_hashes(text: str, k: int) -> np.ndarray:
    """FNV-1a over each k-code-point window's UTF-32LE bytes, deduplicated."""
    if not text:
        return np.empty(0, dtype=np.uint64)
    buf = np.frombuffer(text.encode("utf-32-le"), dtype=np.uint8)
    window = min(k, len(text))
    windows = np.lib.stride_tricks.sliding_window_view(buf, 4 * window)[::4]
    h = np.full(windows.shape[0], _U(FNV_OFFSET), dtype=np.uint64)
    prime = _U(FNV_PRIME)
    for j in range(windows.shape[1]):
        h = (h ^ windows[:, j].astype(np.uint64)) * prime
    return np.unique(h)


def shingle(text: str, k: int = DEFAULT_SHINGLE_K) -> ShingleSet:
    """Hash the distinct k-character shingles of ``text``.

    Text shorter than ``k`` (but non-empty) produces exactly one shingle
    covering the whole text; empty text produces an empty set.
    """
    if k < 1:
        raise DataError(f"shingle size must be >= 1, got {k}")
    return ShingleSet(k=k, hashes=_shingle_hashes(text, k))


def _mod_mersenne(x: np.ndarray) -> np.ndarray:
    """Reduce uint64 values mod 2^61 - 1 (valid for the full uint64 range)."""
    x = (x >> _U(61)) + (x & _P61)
    x = (x >> _U(61)) + (x & _P61)
    return np.where(x >= _P61, x - _P61, x)


def _mulmod_mersenne(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(a * x) mod 2^61 - 1 for operands < 2^61, without 128-bit intermediates.

    Splits both operands at 31 bits; the 2^62 partial reduces via
    2^61 == 1 (mod p) and the 2^31 partial via a 61-bit rotation.
    """
    a_hi, a_lo = a >> _U(31), a & _MASK31
    x_hi, x_lo = x >> _U(31), x & _MASK31
    top = (a_hi * x_hi) << _U(1)
    mid = _mod_mersenne(a_hi * x_lo + a_lo * x_hi)
    mid = ((mid << _U(31)) & _P61) | (mid >> _U(30))
    return _mod_mersenne(top + mid + a_lo * x_lo)


@lru_cache(maxsize=8)
def permutation_params(seed: int, num_perms: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-position permutation coefficients (a, b); a is never zero.

    Deterministic function of (seed, position) via a Philox counter stream.
    Returned arrays are cached; treat them as read-only.
    """
    if num_perms < 1:
        raise DataError(f"num_perms must be >= 1, got {num_perms}")
    gen = np.random.Generator(np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF))
    a = gen.integers(1, MERSENNE_PRIME_61, size=num_perms, dtype=np.uint64)
    b = gen.integers(0, MERSENNE_PRIME_61, size=num_perms, dtype=np.uint64)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def minhash(
    shingles: ShingleSet,
    num_perms: int = DEFAULT_NUM_PERMS,
    seed: int = 0,
) -> MinHashSignature:
    """MinHash signature of a non-empty shingle set."""
    if shingles.is_empty:
        raise DataError("cannot fingerprint an empty shingle set; filter empty documents first")
    a, b = permutation_params(seed, num_perms)
    x = _mod_mersenne(shingles.hashes)
    mins = np.full(num_perms, _P61, dtype=np.uint64)
    # chunk the shingle axis so the (num_perms, chunk) temporaries stay small
    for start in range(0, x.size, 4096):
        chunk = x[start : start + 4096]
        v = _mulmod_mersenne(a[:, None], chunk[None, :])
        v = _mod_mersenne(v + b[:, None])
        np.minimum(mins, v.min(axis=1), out=mins)
    mins.setflags(write=False)
    return MinHashSignature(values=mins, seed=seed)


def minhash_text(
    text: str,
    k: int = DEFAULT_SHINGLE_K,
    num_perms: int = DEFAULT_NUM_PERMS,
    seed: int = 0,
) -> MinHashSignature | None:
    """Shingle and fingerprint in one step; None for text with no shingles."""
    ss = shingle(text, k)
    if ss.is_empty:
        return None
    return minhash(ss, num_perms=num_perms, seed=seed)


def estimate_jaccard(a: MinHashSignature, b: MinHashSignature) -> float:
    """Fraction of agreeing signature positions, an unbiased Jaccard estimate."""
    if a.seed != b.seed:
        raise DataError(f"signatures have different seeds ({a.seed} vs {b.seed})")
    if len(a) != len(b):
        raise DataError(f"signatures have different lengths ({len(a)} vs {len(b)})")
    return float(np.mean(a.values == b.values))


def exact_jaccard(a: ShingleSet, b: ShingleSet) -> float:
    """Exact |A∩B| / |A∪B| on shingle-hash sets. Two empty sets compare as 1.0."""
    if a.is_empty and b.is_empty:
        return 1.0
    if a.is_empty or b.is_empty:
        return 0.0
    inter = np.intersect1d(a.hashes, b.hashes, assume_unique=True).size
    union = a.hashes.size + b.hashes.size - inter
    return inter / union


def write_signature_cache(
    entries: Iterable[tuple[str, MinHashSignature]], path: str | Path
) -> int:
    """Write (id, signature) records in the documented binary layout."""
    count = 0
    num_perms: int | None = None  # header written once the first record fixes it
    with open(path, "wb") as fh:
        for doc_id, sig in entries:
            if num_perms is None:
                num_perms = len(sig)
                fh.write(_CACHE_MAGIC)
                fh.write(struct.pack("<I", num_perms))
            elif len(sig) != num_perms:
                raise DataError("mixed signature lengths in one cache file")
            id_bytes = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<Q", sig.seed & 0xFFFFFFFFFFFFFFFF))
            fh.write(sig.values.astype("<u8").tobytes())
            count += 1
        if num_perms is None:  # empty stream still gets a valid header
            fh.write(_CACHE_MAGIC)
            fh.write(struct.pack("<I", DEFAULT_NUM_PERMS))
    return count


def read_signature_cache(path: str | Path) -> Iterator[tuple[str, MinHashSignature]]:
    """Stream (id, signature) records from a cache file."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _CACHE_MAGIC:
            raise DataError(f"{path}: not a signature cache file")
        (num_perms,) = struct.unpack("<I", fh.read(4))
        while True:
            head = fh.read(4)
            if not head:
                return
            (id_len,) = struct.unpack("<I", head)
            doc_id = fh.read(id_len).decode("utf-8")
            (seed,) = struct.unpack("<Q", fh.read(8))
            raw = fh.read(8 * num_perms)
            if len(raw) != 8 * num_perms:
                raise DataError(f"{path}: truncated record for id {doc_id!r}")
            values = np.frombuffer(raw, dtype="<u8").astype(np.uint64)
            values.setflags(write=False)
            yield doc_id, MinHashSignature(values=values, seed=seed)
