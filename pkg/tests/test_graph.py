"""Graph construction: edge reversal, feature layout, JSON round trips."""

from __future__ import annotations

import numpy as np
import pytest

from astsearch.embeddings import HashingProvider
from astsearch.errors import EmbeddingError
from astsearch.graph import (
    TypeVocabulary,
    build_graph,
    initialize_features,
    parse_graph,
    serialize_graph,
)
from astsearch.refine import refine_ast
from astsearch.syntax import container_kinds_for, parse_source
from astsearch.syntax.tree import RefinedAst, RefinedNode


def small_tree():
    # root -> {a, b}
    return RefinedAst(
        nodes=[
            RefinedNode(0, "module", "a b", [1, 2]),
            RefinedNode(1, "identifier", "a"),
            RefinedNode(2, "identifier", "b"),
        ],
        root=0,
    )


class TestBuildGraph:
    def test_reversal(self):
        edges, root = build_graph(small_tree())
        assert root == 0
        assert set(edges) == {(1, 0), (2, 0)}

    def test_single_node(self):
        tree = RefinedAst(nodes=[RefinedNode(0, "module", "")], root=0)
        edges, root = build_graph(tree)
        assert edges == []
        assert root == 0

    def test_mean_fixture_edge_count(self, mean_refined):
        edges, _ = build_graph(mean_refined)
        assert len(edges) == len(mean_refined.nodes) - 1

    def test_undirected_doubles_edges(self, mean_refined):
        edges, _ = build_graph(mean_refined, undirected=True)
        assert len(edges) == 2 * (len(mean_refined.nodes) - 1)
        assert set(edges) == {(b, a) for a, b in edges}

    def test_reversed_tree_degree_profile(self, mean_refined):
        # every non-root has out-degree 1; the root has none and in-degree = fan-in
        edges, root = build_graph(mean_refined)
        out = {}
        for src, dst in edges:
            out[src] = out.get(src, 0) + 1
        assert root not in out
        for node in mean_refined.nodes:
            if node.id != root:
                assert out.get(node.id, 0) == 1
        indeg_root = sum(1 for _, dst in edges if dst == root)
        assert indeg_root == len(mean_refined.nodes[root].children)


class FixedEmbedder:
    def __init__(self, dim, table=None):
        self.dim = dim
        self.table = table or {}

    def embed_text(self, text, key=None):
        if text in self.table:
            return np.asarray(self.table[text], dtype=np.float64)
        vec = np.zeros(self.dim)
        vec[0] = 1.0
        return vec

    def fingerprint(self):
        return f"fixed:dim={self.dim}"


class TestInitializeFeatures:
    def test_row_construction(self):
        vocab = TypeVocabulary(language="test", kinds=["a", "b", "<unknown>"], unknown_index=2)
        tree = RefinedAst(nodes=[RefinedNode(0, "b", "hello")], root=0)
        embedder = FixedEmbedder(2, {"hello": [0.6, 0.8]})
        graph = initialize_features(tree, vocab, embedder)
        np.testing.assert_allclose(graph.features[0], [0.0, 1.0, 0.0, 0.6, 0.8])

    def test_unseen_kind_hits_unknown_slot(self):
        vocab = TypeVocabulary(language="test", kinds=["a", "<unknown>"], unknown_index=1)
        tree = RefinedAst(nodes=[RefinedNode(0, "zzz", "t")], root=0)
        graph = initialize_features(tree, vocab, FixedEmbedder(2))
        assert graph.features[0, 1] == 1.0
        assert graph.node_kinds[0] == 1

    def test_shapes_and_norms(self, mean_refined, python_vocab):
        embedder = HashingProvider(dim=8, seed=0)
        graph = initialize_features(mean_refined, python_vocab, embedder)
        n = len(mean_refined.nodes)
        t = python_vocab.size
        assert graph.features.shape == (n, t + 8)
        # exactly one 1 in the one-hot block per row; unit-norm content block
        for row in graph.features:
            assert np.sum(row[:t] == 1.0) == 1
            assert np.sum(row[:t] != 0.0) == 1
            assert abs(np.linalg.norm(row[t:]) - 1.0) < 1e-9

    def test_no_node_type_drops_onehot(self, mean_refined, python_vocab):
        embedder = HashingProvider(dim=8, seed=0)
        graph = initialize_features(mean_refined, python_vocab, embedder, no_node_type=True)
        assert graph.features.shape[1] == 8

    def test_embedding_error_carries_node_id(self, mean_refined, python_vocab):
        class Exploding:
            dim = 4

            def embed_text(self, text, key=None):
                raise RuntimeError("boom")

        with pytest.raises(EmbeddingError) as exc_info:
            initialize_features(mean_refined, python_vocab, Exploding())
        assert exc_info.value.node_id == 0

    def test_feature_determinism(self, mean_refined, python_vocab):
        a = initialize_features(mean_refined, python_vocab, HashingProvider(dim=8, seed=3))
        b = initialize_features(mean_refined, python_vocab, HashingProvider(dim=8, seed=3))
        assert np.array_equal(a.features, b.features)
        assert a.edges == b.edges

    def test_provider_substitutability(self, mean_refined, python_vocab):
        # two providers agreeing on all queried texts yield identical graphs
        texts = {n.content for n in mean_refined.nodes}
        base = HashingProvider(dim=8, seed=1)
        table = {t: base.embed_text(t) for t in texts}
        mimic = FixedEmbedder(8, table)
        g1 = initialize_features(mean_refined, python_vocab, base)
        g2 = initialize_features(mean_refined, python_vocab, mimic)
        assert np.array_equal(g1.features, g2.features)


class TestVocabulary:
    def test_lookup_and_unknown(self, python_vocab):
        assert python_vocab.lookup("module") != python_vocab.unknown_index
        assert python_vocab.lookup("no_such_kind") == python_vocab.unknown_index

    def test_duplicate_kinds_rejected(self):
        with pytest.raises(ValueError):
            TypeVocabulary(language="x", kinds=["a", "a"], unknown_index=0)

    def test_merged_vocabulary(self):
        merged = TypeVocabulary.for_languages(["python", "javascript"])
        assert merged.lookup("function_definition") != merged.unknown_index
        assert merged.lookup("function_declaration") != merged.unknown_index


class TestGraphDumpRoundTrip:
    def round_trip(self, graph):
        text = serialize_graph(graph)
        dump = parse_graph(text)
        assert serialize_graph(dump) == text
        return dump

    def test_single_node(self):
        tree = RefinedAst(nodes=[RefinedNode(0, "module", "")], root=0)
        graph = initialize_features(
            tree, TypeVocabulary(language="t", kinds=["module", "<unknown>"], unknown_index=1),
            FixedEmbedder(2),
        )
        dump = self.round_trip(graph)
        assert dump.root == 0
        assert dump.edges == []

    def test_empty_source_graph(self, python_vocab):
        ast = parse_source("", "python")
        refined = refine_ast(ast, container_kinds_for("python"))
        graph = initialize_features(refined, python_vocab, HashingProvider(dim=8))
        self.round_trip(graph)

    def test_mean_fixture(self, mean_graph):
        dump = self.round_trip(mean_graph)
        assert len(dump.nodes) == mean_graph.num_nodes
        assert dump.edges == mean_graph.edges

    def test_randomized_contents_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 12))
            nodes = [
                RefinedNode(
                    i,
                    kind=f"kind_{rng.integers(0, 5)}",
                    content="".join(chr(int(c)) for c in rng.integers(32, 0x2FF, size=6)),
                    children=[],
                )
                for i in range(n)
            ]
            for i in range(1, n):
                nodes[int(rng.integers(0, i))].children.append(i)
            tree = RefinedAst(nodes=nodes, root=0)
            vocab = TypeVocabulary.from_kinds("t", [f"kind_{i}" for i in range(5)])
            graph = initialize_features(tree, vocab, FixedEmbedder(2))
            self.round_trip(graph)
