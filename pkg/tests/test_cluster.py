"""Union-find clustering vs a BFS oracle, keeper selection, dedup application."""

from __future__ import annotations

from collections import deque

import pytest

from corpus_distill.cluster import (
    DuplicateCluster,
    KeeperPolicy,
    RemovalRecord,
    apply_dedup,
    assign_keepers,
    cluster_size_histogram,
    connected_components,
    read_histogram,
    read_removal_log,
    select_keeper,
    write_histogram,
    write_removal_log,
)
from corpus_distill.errors import DataError
from corpus_distill.lsh import CandidatePair

from conftest import make_doc


def bfs_components(edges: list[tuple[str, str]]) -> set[frozenset[str]]:
    """Independent connected-components oracle via breadth-first search."""
    adjacency: dict[str, set[str]] = {}
    for a, b in edges:
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)
    seen: set[str] = set()
    components: set[frozenset[str]] = set()
    for start in adjacency:
        if start in seen:
            continue
        queue = deque([start])
        component = set()
        while queue:
            node = queue.popleft()
            if node in component:
                continue
            component.add(node)
            queue.extend(adjacency[node] - component)
        seen |= component
        if len(component) > 1:
            components.add(frozenset(component))
    return components


class TestConnectedComponents:
    def test_simple_chain(self):
        clusters = connected_components([("a", "b"), ("b", "c")])
        assert len(clusters) == 1
        assert clusters[0].members == ("a", "b", "c")

    def test_no_edges_no_clusters(self):
        assert connected_components([]) == []

    def test_matches_bfs_oracle_on_random_graphs(self, rng):
        for trial in range(25):
            n = int(rng.integers(10, 1000))
            n_edges = int(rng.integers(0, n))
            nodes = [f"n{i:04d}" for i in range(n)]
            edges = [
                (nodes[int(rng.integers(0, n))], nodes[int(rng.integers(0, n))])
                for _ in range(n_edges)
            ]
            edges = [(a, b) for a, b in edges if a != b]
            got = {frozenset(c.members) for c in connected_components(edges)}
            assert got == bfs_components(edges), f"trial {trial}"

    def test_cliques_merge_whole_buckets(self):
        clusters = connected_components([("x", "y")], cliques=[["a", "b", "c"], ["c", "d"]])
        by_min = {c.members[0]: c.members for c in clusters}
        assert by_min["a"] == ("a", "b", "c", "d")
        assert by_min["x"] == ("x", "y")

    def test_output_sorted_by_smallest_member(self):
        clusters = connected_components([("z1", "z2"), ("a1", "a2"), ("m1", "m2")])
        assert [c.members[0] for c in clusters] == ["a1", "m1", "z1"]

    def test_order_invariance(self, rng):
        edges = [(f"n{int(rng.integers(0, 60)):02d}", f"m{int(rng.integers(0, 60)):02d}") for _ in range(80)]
        base = connected_components(edges)
        for _ in range(5):
            perm = [edges[i] for i in rng.permutation(len(edges))]
            assert connected_components(perm) == base

    def test_accepts_candidate_pairs(self):
        clusters = connected_components([CandidatePair("a", "b", 3)])
        assert clusters[0].members == ("a", "b")


class TestKeeperSelection:
    POLICY = KeeperPolicy(ranking=("fineweb_edu2", "dclm", "zyda1", "dolma_cc"))

    def test_higher_ranked_source_wins(self):
        cluster = DuplicateCluster(members=("dclm/7", "dolma/3"))
        sources = {"dclm/7": "dclm", "dolma/3": "dolma_cc"}
        assert select_keeper(cluster, self.POLICY, sources) == "dclm/7"

    def test_singleton(self):
        cluster = DuplicateCluster(members=("only/1",))
        assert select_keeper(cluster, self.POLICY, {"only/1": "zyda1"}) == "only/1"

    def test_same_source_tie_breaks_to_smaller_id(self):
        cluster = DuplicateCluster(members=("dclm/b", "dclm/a"))
        sources = {"dclm/a": "dclm", "dclm/b": "dclm"}
        assert select_keeper(cluster, self.POLICY, sources) == "dclm/a"

    def test_unknown_source_rejected(self):
        cluster = DuplicateCluster(members=("x/1", "y/1"))
        with pytest.raises(DataError, match="not covered"):
            select_keeper(cluster, self.POLICY, {"x/1": "mystery", "y/1": "dclm"})

    def test_duplicate_ranking_rejected(self):
        with pytest.raises(DataError):
            KeeperPolicy(ranking=("a", "a"))

    def test_assign_keepers_rank_optimality(self, rng):
        sources = {}
        clusters = []
        names = list(self.POLICY.ranking)
        for c in range(30):
            members = []
            for m in range(int(rng.integers(2, 6))):
                doc_id = f"c{c:02d}/m{m}"
                sources[doc_id] = names[int(rng.integers(0, len(names)))]
                members.append(doc_id)
            clusters.append(DuplicateCluster(members=tuple(sorted(members))))
        annotated = assign_keepers(clusters, self.POLICY, sources)
        for cluster in annotated:
            keeper_rank = self.POLICY.rank_of(sources[cluster.keeper])
            assert all(keeper_rank <= self.POLICY.rank_of(sources[m]) for m in cluster.members)


class TestApplyDedup:
    def _mini_corpus(self):
        docs = [
            make_doc("a/1", "a", "first text"),
            make_doc("a/2", "a", "second text"),
            make_doc("b/1", "b", "third text"),
            make_doc("b/2", "b", "fourth text"),
        ]
        sources = {d.id: d.source for d in docs}
        return docs, sources

    def test_no_clusters_identity(self):
        docs, sources = self._mini_corpus()
        assert list(apply_dedup(docs, [], sources)) == docs

    def test_cluster_of_three_logs_two_removals(self):
        docs, sources = self._mini_corpus()
        cluster = DuplicateCluster(members=("a/1", "a/2", "b/1"), keeper="a/1")
        removals: list[RemovalRecord] = []
        kept = list(apply_dedup(docs, [cluster], sources, on_removal=removals.append))
        assert [d.id for d in kept] == ["a/1", "b/2"]
        assert len(removals) == 2
        assert {r.removed_id for r in removals} == {"a/2", "b/1"}
        assert all(r.keeper_id == "a/1" and r.cluster_size == 3 for r in removals)
        assert removals[0].source_kept == "a"

    def test_partition_property(self):
        docs, sources = self._mini_corpus()
        cluster = DuplicateCluster(members=("a/1", "b/2"), keeper="b/2")
        removals: list[RemovalRecord] = []
        kept = list(apply_dedup(docs, [cluster], sources, on_removal=removals.append))
        kept_ids = {d.id for d in kept}
        removed_ids = {r.removed_id for r in removals}
        assert kept_ids | removed_ids == {d.id for d in docs}
        assert kept_ids & removed_ids == set()

    def test_keeperless_cluster_rejected(self):
        docs, sources = self._mini_corpus()
        with pytest.raises(DataError):
            list(apply_dedup(docs, [DuplicateCluster(members=("a/1", "a/2"))], sources))

    def test_removal_log_round_trip(self, tmp_path):
        records = [
            RemovalRecord("a/2", "a/1", 3, "zyda1", "dclm"),
            RemovalRecord("b/9", "a/1", 3, "dolma_cc", "dclm"),
        ]
        path = tmp_path / "removals.jsonl"
        assert write_removal_log(records, path) == 2
        assert list(read_removal_log(path)) == records


class TestHistogram:
    def test_small_fixture(self):
        clusters = [
            DuplicateCluster(members=("a", "b")),
            DuplicateCluster(members=("c", "d")),
            DuplicateCluster(members=("e", "f", "g")),
        ]
        assert cluster_size_histogram(clusters) == {2: 2, 3: 1}

    def test_empty(self):
        assert cluster_size_histogram([]) == {}

    def test_export_sorted_round_trip(self, tmp_path):
        hist = {10: 3, 2: 100, 1000: 1}
        path = tmp_path / "hist.tsv"
        write_histogram(hist, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "cluster_size\tcount"
        assert lines[1:] == ["2\t100", "10\t3", "1000\t1"]
        assert read_histogram(path) == hist

    def test_plot_is_deterministic_svg(self, tmp_path):
        from corpus_distill.cluster import plot_histogram

        hist = {2: 100, 10: 10, 1000: 1}
        plot_histogram(hist, tmp_path / "a.svg")
        plot_histogram(hist, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
