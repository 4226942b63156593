"""Inputs for the derived-oracle test fixtures, exportable via the CLI.

Everything here is data only: sources, hand-built trees, small parameter
sets, and seeds. The test suite recomputes expected values with independent
oracles; exporting the inputs makes those runs reproducible outside pytest.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from astsearch.corpus import synthetic_corpus

MEAN_FUNCTION_SOURCE = "def mean(data):\n    return sum(data)/len(data)"

# 5-node hand tree with two shadow leaves: refined to 3 nodes, parent content
# equal to the space-join of its former children.
HAND_TREE = {
    "kinds": ["call", "identifier", "(", "identifier", ")"],
    "contents": ["f(x)", "f", "(", "x", ")"],
    "children": [[1, 2, 3, 4], [], [], [], []],
    "root": 0,
}

HASH_FIXTURE_TEXTS = ["abc", "abd", "hello world", "hello_world", "", "ab"]

FACONV_CHAIN = {
    "hidden": 3,
    "edges": [[0, 1]],
    "eps": 0.25,
    "gate": [0.1, -0.2, 0.3, 0.05, 0.15, -0.1],
    "h": [[0.5, -0.25, 0.75], [1.0, 0.5, -0.5]],
    "h0": [[0.2, 0.1, -0.3], [0.4, -0.2, 0.6]],
}

ASTGPOOL_FIXTURE = {
    "h": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.5], [0.5, -0.5]],
    "p": [3.0, 4.0],
    "beta1": 1.0,
    "beta2": 1.0,
    "edges": [[1, 0], [2, 0], [3, 2], [4, 2]],
    "root": 0,
}

GRU_FIXTURE_SEED = 7
GRU_FIXTURE_HIDDEN = 4

LOSS_FIXTURES = {
    "identical_n4": {"rows": 4, "vector": [1.0, 0.0, 0.0], "tau": 0.37},
    "orthonormal_n2": {"tau": 1.0},
    "fd_check": {"n": 5, "d": 6, "seed": 11},
}

GRADCHECK_SPEC = {
    "seeds": [0, 1, 2],
    "max_nodes": 10,
    "hidden": 8,
    "step": 1e-5,
    "rel_tol": 1e-4,
}

METRIC_FIXTURES = {
    "mrr_ranks": [1, 2, 4],
    "recall_ranks": [1, 2, 1],
    "mam_random": {"codes": 5, "texts": 3, "dim": 4, "seed": 3},
    "retrieval_pairs": {"n": 20, "dim": 16, "seed": 5},
}


def export_fixtures(out_dir: str | Path, seed: int = 0) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    corpus = synthetic_corpus(8, seed=seed)
    files = {
        "mean_function.json": {"language": "python", "source": MEAN_FUNCTION_SOURCE},
        "hand_tree.json": HAND_TREE,
        "hash_texts.json": {"dim": 8, "seed": seed, "texts": HASH_FIXTURE_TEXTS},
        "faconv_chain.json": FACONV_CHAIN,
        "astgpool_scores.json": ASTGPOOL_FIXTURE,
        "gru_sequence.json": {
            "seed": GRU_FIXTURE_SEED,
            "hidden": GRU_FIXTURE_HIDDEN,
            "inputs": rng.normal(size=(3, GRU_FIXTURE_HIDDEN)).tolist(),
        },
        "loss_fixtures.json": LOSS_FIXTURES,
        "gradcheck_spec.json": GRADCHECK_SPEC,
        "metric_fixtures.json": METRIC_FIXTURES,
        "synthetic_corpus_head.json": [
            {"id": s.id, "language": s.language, "code": s.code, "doc": s.doc} for s in corpus
        ],
    }
    written = []
    for name, payload in files.items():
        (out / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(name)
    return sorted(written)
