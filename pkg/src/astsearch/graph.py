"""Refined tree -> reversed-edge featured graph.

Edges point child -> parent so leaf information flows toward the root under
message passing. Node features are one-hot(kind) concatenated with the
unit-norm content embedding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from astsearch.errors import EmbeddingError, FormatError
from astsearch.syntax.languages import kind_inventory
from astsearch.syntax.tree import RefinedAst

UNKNOWN_KIND = "<unknown>"


@dataclass
class TypeVocabulary:
    """One-hot basis over a grammar's node kinds plus an unknown slot."""

    language: str
    kinds: list[str]  # unique; the last entry is the unknown sentinel
    unknown_index: int

    def __post_init__(self):
        if len(set(self.kinds)) != len(self.kinds):
            raise ValueError("vocabulary kinds must be unique")
        if not 0 <= self.unknown_index < len(self.kinds):
            raise ValueError("unknown_index out of range")
        self._index = {k: i for i, k in enumerate(self.kinds)}

    @property
    def size(self) -> int:
        return len(self.kinds)

    def lookup(self, kind: str) -> int:
        return self._index.get(kind, self.unknown_index)

    @classmethod
    def from_kinds(cls, language: str, kinds) -> "TypeVocabulary":
        ordered = sorted(set(kinds) - {UNKNOWN_KIND}) + [UNKNOWN_KIND]
        return cls(language=language, kinds=ordered, unknown_index=len(ordered) - 1)

    @classmethod
    def for_language(cls, language: str) -> "TypeVocabulary":
        """Vocabulary from the grammar's own kind inventory."""
        return cls.from_kinds(language, kind_inventory(language))

    @classmethod
    def for_languages(cls, languages) -> "TypeVocabulary":
        """Merged vocabulary for a mixed-language corpus."""
        merged: set[str] = set()
        names = sorted(set(languages))
        for lang in names:
            merged |= set(kind_inventory(lang))
        return cls.from_kinds("+".join(names), merged)


@dataclass
class CodeGraph:
    """Reversed-edge graph with initialized node features."""

    num_nodes: int
    edges: list[tuple[int, int]]  # (src=child, dst=parent); both directions if undirected
    features: np.ndarray          # num_nodes x (T + d), or num_nodes x d without node types
    root: int
    node_kinds: np.ndarray        # per-node vocabulary index
    kinds: list[str] = field(default_factory=list)
    contents: list[str] = field(default_factory=list)


def build_graph(refined: RefinedAst, undirected: bool = False) -> tuple[list[tuple[int, int]], int]:
    """Edge list with every tree edge reversed to child -> parent."""
    edges: list[tuple[int, int]] = []
    for node in refined.nodes:
        for child in node.children:
            edges.append((child, node.id))
            if undirected:
                edges.append((node.id, child))
    return edges, refined.root


def initialize_features(
    refined: RefinedAst,
    vocab: TypeVocabulary,
    embedder,
    no_node_type: bool = False,
    undirected: bool = False,
) -> CodeGraph:
    """Build the featured graph: one-hot kind block plus content embedding.

    With no_node_type the one-hot block is omitted entirely and the feature
    width is just the embedder dimension.
    """
    edges, root = build_graph(refined, undirected=undirected)
    n = len(refined.nodes)
    d = embedder.dim
    t = 0 if no_node_type else vocab.size
    features = np.zeros((n, t + d), dtype=np.float64)
    node_kinds = np.zeros(n, dtype=np.int64)
    for node in refined.nodes:
        idx = vocab.lookup(node.kind)
        node_kinds[node.id] = idx
        if not no_node_type:
            features[node.id, idx] = 1.0
        try:
            vec = embedder.embed_text(node.content)
        except Exception as exc:
            raise EmbeddingError(
                f"embedding node {node.id} ({node.kind!r}) failed: {exc}", node_id=node.id
            ) from exc
        features[node.id, t:] = vec
    return CodeGraph(
        num_nodes=n,
        edges=edges,
        features=features,
        root=root,
        node_kinds=node_kinds,
        kinds=[node.kind for node in refined.nodes],
        contents=[node.content for node in refined.nodes],
    )


@dataclass
class GraphDump:
    """The JSON graph-dump model: structure and text, no feature matrix."""

    root: int
    nodes: list[tuple[int, str, str]]  # (id, kind, content)
    edges: list[tuple[int, int]]


def _as_dump(graph: CodeGraph | GraphDump) -> GraphDump:
    if isinstance(graph, GraphDump):
        return graph
    return GraphDump(
        root=graph.root,
        nodes=[(i, graph.kinds[i], graph.contents[i]) for i in range(graph.num_nodes)],
        edges=list(graph.edges),
    )


def serialize_graph(graph: CodeGraph | GraphDump) -> str:
    """JSON dump; edges are already reversed (child -> parent)."""
    dump = _as_dump(graph)
    payload = {
        "root": dump.root,
        "nodes": [{"id": i, "kind": k, "content": c} for i, k, c in dump.nodes],
        "edges": [[src, dst] for src, dst in dump.edges],
    }
    return json.dumps(payload, ensure_ascii=False)


def parse_graph(text: str) -> GraphDump:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"graph dump is not valid JSON: {exc}", offset=exc.pos) from exc
    try:
        nodes = [(n["id"], n["kind"], n["content"]) for n in payload["nodes"]]
        edges = [(int(s), int(d)) for s, d in payload["edges"]]
        root = int(payload["root"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"graph dump missing or malformed field: {exc}") from exc
    return GraphDump(root=root, nodes=nodes, edges=edges)
