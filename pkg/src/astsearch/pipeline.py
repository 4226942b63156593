"""Per-sample encoding pipeline: source text -> featured graph + root embedding."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from astsearch.graph import CodeGraph, TypeVocabulary, initialize_features
from astsearch.refine import refine_ast
from astsearch.syntax import container_kinds_for, parse_source


@dataclass
class PipelineOptions:
    no_node_type: bool = False
    undirected: bool = False
    root_content_max_chars: int | None = None


@dataclass
class Pipeline:
    """Deterministic document encoder shared by training, indexing, and the CLI."""

    vocab: TypeVocabulary
    provider: object  # content embedder: .dim, .embed_text(text)
    options: PipelineOptions = field(default_factory=PipelineOptions)

    @property
    def feature_width(self) -> int:
        base = 0 if self.options.no_node_type else self.vocab.size
        return base + self.provider.dim

    def encode_sample(self, code: str, language: str) -> tuple[CodeGraph, np.ndarray]:
        """(featured graph, root content embedding) for one source document."""
        ast = parse_source(code, language)
        refined = refine_ast(
            ast,
            container_kinds=container_kinds_for(language),
            root_content_max_chars=self.options.root_content_max_chars,
        )
        graph = initialize_features(
            refined,
            self.vocab,
            self.provider,
            no_node_type=self.options.no_node_type,
            undirected=self.options.undirected,
        )
        offset = 0 if self.options.no_node_type else self.vocab.size
        root_embedding = graph.features[graph.root, offset:].copy()
        return graph, root_embedding

    def fingerprint(self) -> str:
        vocab_digest = hashlib.sha256("\n".join(self.vocab.kinds).encode("utf-8")).hexdigest()
        payload = json.dumps(
            {
                "vocab_language": self.vocab.language,
                "vocab": vocab_digest[:16],
                "no_node_type": self.options.no_node_type,
                "undirected": self.options.undirected,
                "root_max": self.options.root_content_max_chars,
                "content_provider": self.provider.fingerprint(),
            },
            sort_keys=True,
        )
        return "pipeline:sha256:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:32]
