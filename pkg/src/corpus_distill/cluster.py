"""Duplicate graph clustering, keeper selection, and dedup application.

Connected components come from union-find (path compression, union by
size), so the resulting partition does not depend on the order of the pair
stream. Clusters are emitted sorted by their smallest member id, members
sorted within each cluster. Each cluster keeps exactly one document: the
member whose source ranks highest in the keeper policy, ties broken by the
lexicographically smallest id.

Removal logs are line-delimited JSON records with fields ``removed_id``,
``keeper_id``, ``cluster_size``, ``source_removed``, ``source_kept``.
Histogram exports are two-column tab-separated (cluster_size, count),
sorted by size.
"""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

from .corpus import Document
from .errors import DataError
from .lsh import CandidatePair

logger = logging.getLogger(__name__)


class UnionFind:
    """Disjoint sets over string keys."""

    def __init__(self) -> None:
        self._parent: dict[str, str] = {}
        self._size: dict[str, int] = {}

    def add(self, x: str) -> None:
        if x not in self._parent:
            self._parent[x] = x
            self._size[x] = 1

    def find(self, x: str) -> str:
        root = x
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[x] != root:  # path compression
            self._parent[x], x = root, self._parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        self.add(a)
        self.add(b)
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]

    def groups(self) -> list[list[str]]:
        by_root: dict[str, list[str]] = {}
        for x in self._parent:
            by_root.setdefault(self.find(x), []).append(x)
        return list(by_root.values())


@dataclass(frozen=True)
class DuplicateCluster:
    """A connected component of the duplicate graph; ``keeper`` in members once set."""

    members: tuple[str, ...]
    keeper: str | None = None

    def __post_init__(self) -> None:
        if not self.members:
            raise DataError("cluster must have at least one member")
        if self.keeper is not None and self.keeper not in self.members:
            raise DataError(f"keeper {self.keeper!r} is not a cluster member")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class KeeperPolicy:
    """Source names by keep priority: position 0 is kept first."""

    ranking: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.ranking)) != len(self.ranking):
            raise DataError(f"duplicate sources in ranking: {self.ranking}")
        if not self.ranking:
            raise DataError("ranking must not be empty")

    def rank_of(self, source: str) -> int:
        try:
            return self.ranking.index(source) + 1
        except ValueError:
            raise DataError(f"source {source!r} not covered by ranking {list(self.ranking)}") from None


def connected_components(
    pairs: Iterable[CandidatePair | tuple[str, str]],
    cliques: Iterable[Iterable[str]] = (),
) -> list[DuplicateCluster]:
    """Clusters of the graph whose edges are ``pairs`` plus whole ``cliques``.

    Only documents appearing in an edge or clique are clustered; singletons
    stay implicit. Output is sorted by smallest member id and is invariant
    under permutations of the input stream.
    """
    uf = UnionFind()
    for pair in pairs:
        if isinstance(pair, CandidatePair):
            uf.union(pair.doc_a, pair.doc_b)
        else:
            a, b = pair
            uf.union(a, b)
    for clique in cliques:
        members = list(clique)
        for other in members[1:]:
            uf.union(members[0], other)
    clusters = [
        DuplicateCluster(members=tuple(sorted(group)))
        for group in uf.groups()
        if len(group) > 1
    ]
    clusters.sort(key=lambda c: c.members[0])
    return clusters


def select_keeper(
    cluster: DuplicateCluster,
    policy: KeeperPolicy,
    sources: Mapping[str, str],
) -> str:
    """The member to keep: best source rank, then smallest id."""
    return min(cluster.members, key=lambda m: (policy.rank_of(sources[m]), m))


def assign_keepers(
    clusters: Iterable[DuplicateCluster],
    policy: KeeperPolicy,
    sources: Mapping[str, str],
) -> list[DuplicateCluster]:
    out = []
    for cluster in clusters:
        for member in cluster.members:
            if member not in sources:
                raise DataError(f"cluster member {member!r} has no known source")
        out.append(replace(cluster, keeper=select_keeper(cluster, policy, sources)))
    return out


@dataclass(frozen=True)
class RemovalRecord:
    removed_id: str
    keeper_id: str
    cluster_size: int
    source_removed: str
    source_kept: str

    def to_record(self) -> dict:
        return {
            "removed_id": self.removed_id,
            "keeper_id": self.keeper_id,
            "cluster_size": self.cluster_size,
            "source_removed": self.source_removed,
            "source_kept": self.source_kept,
        }


def apply_dedup(
    docs: Iterable[Document],
    clusters: Iterable[DuplicateCluster],
    sources: Mapping[str, str],
    on_removal: Callable[[RemovalRecord], None] | None = None,
) -> Iterator[Document]:
    """Yield every document except non-keeper cluster members.

    ``sources`` maps ids to source names (for the removal log).
    ``on_removal`` fires once per removed document, in stream order.
    """
    removal_info: dict[str, tuple[str, int]] = {}
    for cluster in clusters:
        if cluster.keeper is None:
            raise DataError("apply_dedup needs keeper-annotated clusters")
        for member in cluster.members:
            if member != cluster.keeper:
                removal_info[member] = (cluster.keeper, cluster.size)
    for doc in docs:
        hit = removal_info.get(doc.id)
        if hit is None:
            yield doc
            continue
        keeper_id, size = hit
        if on_removal is not None:
            on_removal(
                RemovalRecord(
                    removed_id=doc.id,
                    keeper_id=keeper_id,
                    cluster_size=size,
                    source_removed=doc.source,
                    source_kept=sources[keeper_id],
                )
            )


def write_removal_log(records: Iterable[RemovalRecord], path: str | Path) -> int:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    count = 0
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_record(), ensure_ascii=False))
            fh.write("\n")
            count += 1
    os.replace(tmp, path)
    return count


def read_removal_log(path: str | Path) -> Iterator[RemovalRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                yield RemovalRecord(**json.loads(line))


def cluster_size_histogram(clusters: Iterable[DuplicateCluster]) -> dict[int, int]:
    """Exact cluster-size counts: size -> number of clusters."""
    return dict(Counter(c.size for c in clusters))


def write_histogram(hist: Mapping[int, int], path: str | Path) -> None:
    """Two-column TSV (cluster_size, count), ascending by size."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("cluster_size\tcount\n")
        for size in sorted(hist):
            fh.write(f"{size}\t{hist[size]}\n")
    os.replace(tmp, path)


def read_histogram(path: str | Path) -> dict[int, int]:
    hist: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.rstrip("\n") != "cluster_size\tcount":
            raise DataError(f"{path}: not a histogram export")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            size, count = line.split("\t")
            hist[int(size)] = int(count)
    return hist


def plot_histogram(hist: Mapping[int, int], path: str | Path, title: str = "Duplicate cluster sizes") -> None:
    """Log-log cluster-size plot written as SVG (or any matplotlib-supported format)."""
    from matplotlib.figure import Figure

    sizes = sorted(hist)
    counts = [hist[s] for s in sizes]
    fig = Figure(figsize=(5.5, 4.0))
    ax = fig.add_subplot()
    ax.loglog(sizes, counts, marker="o", linestyle="none", markersize=4)
    ax.set_xlabel("cluster size")
    ax.set_ylabel("number of clusters")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    with _deterministic_svg():
        fig.savefig(str(path), metadata={"Date": None} if str(path).endswith(".svg") else None)


class _deterministic_svg:
    """Fix matplotlib's SVG hash salt so identical plots are byte-identical."""

    def __enter__(self):
        import matplotlib

        self._old = matplotlib.rcParams.get("svg.hashsalt")
        matplotlib.rcParams["svg.hashsalt"] = "corpus-distill"
        return self

    def __exit__(self, *exc):
        import matplotlib

        matplotlib.rcParams["svg.hashsalt"] = self._old
        return False
