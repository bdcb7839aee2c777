"""Dendrogram construction, size-capped cutting, and DOT export.

The linkage oracle here recomputes every cluster-pair distance from scratch
off the leaf-level matrix at every step, never reusing previous linkage
values, so it shares no arithmetic with the production implementation.
"""
import re

import numpy as np
import pytest

from hierdecomp.confmat import DissimilarityMatrix
from hierdecomp.linkage import (
    Clustering,
    Dendrogram,
    Merge,
    clustering_from_json,
    clustering_to_json,
    cut_clusters,
    export_dot,
    upgma_linkage,
)


def naive_upgma(values: np.ndarray):
    """Reference agglomeration: mean pairwise leaf distance, recomputed fully.

    Returns (left, right, height, size) tuples with the same node numbering
    convention as the production code. Ties pick the smallest (min id,
    max id) pair.
    """
    k = values.shape[0]
    members = {i: frozenset([i]) for i in range(k)}
    active = sorted(members)
    merges = []
    for m in range(k - 1):
        best_key = None
        best_pair = None
        for ai in range(len(active)):
            for bi in range(ai + 1, len(active)):
                a, b = active[ai], active[bi]
                total = sum(values[x, y] for x in members[a] for y in members[b])
                dist = total / (len(members[a]) * len(members[b]))
                key = (dist, a, b)
                if best_key is None or key < best_key:
                    best_key, best_pair = key, (a, b)
        a, b = best_pair
        node = k + m
        members[node] = members[a] | members[b]
        merges.append((a, b, best_key[0], len(members[node])))
        active = [n for n in active if n not in (a, b)] + [node]
    return merges


def random_dissimilarity(k: int, rng: np.random.Generator) -> DissimilarityMatrix:
    raw = rng.uniform(0.05, 1.0, size=(k, k))
    upper = np.triu(raw, 1)
    return DissimilarityMatrix(values=upper + upper.T, class_ids=range(k))


class MiniDotParser:
    """Recursive-descent parser for the digraph subset of the DOT grammar:
    graph: 'digraph' [ID] '{' stmt* '}', statements being node declarations
    with optional attribute lists or edges. Raises on any deviation.
    """

    TOKEN = re.compile(r'\s*(->|[{}\[\];,=]|"[^"]*"|[A-Za-z0-9_.#]+)')

    def __init__(self, text: str):
        self.tokens = []
        pos = 0
        while pos < len(text):
            match = self.TOKEN.match(text, pos)
            if not match:
                if text[pos:].strip():
                    raise SyntaxError(f"unlexable input at {text[pos:pos+20]!r}")
                break
            self.tokens.append(match.group(1))
            pos = match.end()
        self.idx = 0
        self.nodes: set[str] = set()
        self.edges: list[tuple[str, str]] = []
        self.attrs: dict[str, dict[str, str]] = {}

    def peek(self):
        return self.tokens[self.idx] if self.idx < len(self.tokens) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise SyntaxError(f"expected {expected!r}, got {tok!r}")
        self.idx += 1
        return tok

    def parse(self):
        self.take("digraph")
        if self.peek() != "{":
            self.take()  # optional graph name
        self.take("{")
        while self.peek() != "}":
            self.statement()
        self.take("}")
        if self.peek() is not None:
            raise SyntaxError("trailing tokens after closing brace")
        return self

    def statement(self):
        head = self.take()
        if self.peek() == "->":
            self.take("->")
            tail = self.take()
            self.edges.append((head, tail))
            self.nodes.update((head, tail))
        else:
            self.nodes.add(head)
            if self.peek() == "[":
                self.attrs[head] = self.attr_list()
        if self.peek() == ";":
            self.take(";")

    def attr_list(self):
        self.take("[")
        attrs = {}
        while self.peek() != "]":
            name = self.take()
            self.take("=")
            attrs[name] = self.take().strip('"')
            if self.peek() == ",":
                self.take(",")
        self.take("]")
        return attrs


class TestUpgma:
    def test_two_leaves(self):
        d = DissimilarityMatrix(values=np.array([[0.0, 0.6], [0.6, 0.0]]), class_ids=(0, 1))
        dg = upgma_linkage(d)
        assert dg.merges == (Merge(left=0, right=1, height=0.6, size=2),)

    def test_three_leaves_by_hand(self):
        values = np.array([[0.0, 0.2, 0.8], [0.2, 0.0, 0.6], [0.8, 0.6, 0.0]])
        dg = upgma_linkage(DissimilarityMatrix(values=values, class_ids=(0, 1, 2)))
        assert (dg.merges[0].left, dg.merges[0].right) == (0, 1)
        assert dg.merges[0].height == pytest.approx(0.2)
        assert (dg.merges[1].left, dg.merges[1].right) == (2, 3)
        assert dg.merges[1].height == pytest.approx(0.7)  # (0.8 + 0.6) / 2

    def test_rejects_single_class(self):
        d = DissimilarityMatrix(values=np.zeros((1, 1)), class_ids=(0,))
        with pytest.raises(ValueError, match="at least 2"):
            upgma_linkage(d)

    @pytest.mark.parametrize("k", [2, 4, 7, 12])
    def test_matches_naive_oracle(self, k):
        rng = np.random.default_rng(100 + k)
        for _ in range(10):
            d = random_dissimilarity(k, rng)
            dg = upgma_linkage(d)
            expected = naive_upgma(d.values)
            assert len(dg.merges) == len(expected)
            for merge, (left, right, height, size) in zip(dg.merges, expected):
                assert (merge.left, merge.right, merge.size) == (left, right, size)
                assert merge.height == pytest.approx(height, abs=1e-12)

    def test_heights_non_decreasing(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            k = int(rng.integers(2, 10))
            dg = upgma_linkage(random_dissimilarity(k, rng))
            heights = [m.height for m in dg.merges]
            assert all(a <= b + 1e-15 for a, b in zip(heights, heights[1:]))

    def test_permutation_isomorphism(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            k = int(rng.integers(3, 9))
            d = random_dissimilarity(k, rng)
            perm = rng.permutation(k)
            permuted = DissimilarityMatrix(
                values=d.values[np.ix_(perm, perm)],
                class_ids=[int(d.class_ids[p]) for p in perm],
            )
            a = upgma_linkage(d)
            b = upgma_linkage(permuted)
            assert sorted(round(m.height, 9) for m in a.merges) == sorted(
                round(m.height, 9) for m in b.merges
            )
            theta = int(rng.integers(1, k + 1))
            part_a = sorted(tuple(cl) for cl in cut_clusters(a, theta).clusters)
            part_b = sorted(tuple(cl) for cl in cut_clusters(b, theta).clusters)
            assert part_a == part_b


class TestCutClusters:
    def fixture_tree(self):
        values = np.array([[0.0, 0.2, 0.8], [0.2, 0.0, 0.6], [0.8, 0.6, 0.0]])
        return upgma_linkage(DissimilarityMatrix(values=values, class_ids=(0, 1, 2)))

    def test_theta_at_least_k(self):
        dg = self.fixture_tree()
        clustering = cut_clusters(dg, theta=3)
        assert clustering.clusters == ((0, 1, 2),)

    def test_theta_one(self):
        dg = self.fixture_tree()
        clustering = cut_clusters(dg, theta=1)
        assert sorted(clustering.clusters) == [(0,), (1,), (2,)]

    def test_theta_two(self):
        dg = self.fixture_tree()
        clustering = cut_clusters(dg, theta=2)
        assert sorted(clustering.clusters) == [(0, 1), (2,)]

    def test_invalid_theta(self):
        with pytest.raises(ValueError, match="theta"):
            cut_clusters(self.fixture_tree(), theta=0)

    def test_partition_properties(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            k = int(rng.integers(2, 14))
            theta = int(rng.integers(1, k + 1))
            dg = upgma_linkage(random_dissimilarity(k, rng))
            clustering = cut_clusters(dg, theta)
            sizes = [len(cl) for cl in clustering.clusters]
            assert all(size <= theta for size in sizes)
            assert sum(sizes) == k
            flat = [c for cl in clustering.clusters for c in cl]
            assert sorted(flat) == list(range(k))


class TestExportDot:
    def test_two_leaf_structure(self):
        d = DissimilarityMatrix(values=np.array([[0.0, 0.5], [0.5, 0.0]]), class_ids=(0, 1))
        parsed = MiniDotParser(export_dot(upgma_linkage(d))).parse()
        assert len(parsed.nodes - {"node"}) == 3
        assert len(parsed.edges) == 2

    def test_parses_and_labels_heights(self):
        rng = np.random.default_rng(3)
        dg = upgma_linkage(random_dissimilarity(6, rng))
        parsed = MiniDotParser(export_dot(dg)).parse()
        assert len(parsed.edges) == 2 * len(dg.merges)
        root_label = parsed.attrs[f"n{dg.root}"]["label"]
        assert root_label == f"{dg.merges[-1].height:.3f}"

    def test_cluster_colors(self):
        rng = np.random.default_rng(4)
        dg = upgma_linkage(random_dissimilarity(5, rng))
        clustering = cut_clusters(dg, theta=3)
        assert clustering.n_clusters == 2
        parsed = MiniDotParser(export_dot(dg, clustering)).parse()
        fills = {
            attrs["fillcolor"]
            for node, attrs in parsed.attrs.items()
            if "fillcolor" in attrs
        }
        assert len(fills) == 2


class TestClusteringJson:
    def test_round_trip(self):
        clustering = Clustering(
            clusters=((0, 1, 2), (3,)),
            overlapping=False,
            parent_k=4,
            theta=3,
        )
        loaded = clustering_from_json(clustering_to_json(clustering))
        assert loaded == clustering

    def test_schema_keys(self):
        import json

        clustering = Clustering(clusters=((0, 1),), overlapping=False, parent_k=2, theta=2)
        payload = json.loads(clustering_to_json(clustering))
        assert set(payload) == {"overlapping", "theta", "gamma", "clusters", "cores"}

    def test_validation_rejects_overlap_in_cores(self):
        with pytest.raises(ValueError, match="disjoint"):
            Clustering(clusters=((0, 1), (1, 2)), overlapping=False, parent_k=3)
