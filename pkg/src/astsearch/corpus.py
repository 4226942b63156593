"""Corpus IO (JSON Lines) and the deterministic synthetic corpus generator."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from astsearch.errors import FormatError


@dataclass
class Sample:
    id: str
    language: str
    code: str
    doc: str


def read_corpus(path: str | Path) -> list[Sample]:
    """Read JSONL samples; unknown keys are ignored, blank lines skipped."""
    samples: list[Sample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                samples.append(
                    Sample(
                        id=str(obj["id"]),
                        language=str(obj["language"]),
                        code=str(obj["code"]),
                        doc=str(obj["doc"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"corpus line {lineno}: {exc}") from exc
    return samples


def write_corpus(samples: list[Sample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {"id": s.id, "language": s.language, "code": s.code, "doc": s.doc},
                    ensure_ascii=False,
                )
                + "\n"
            )


_VERBS = [
    "compute", "scale", "filter", "merge", "count", "clip", "invert", "shift",
    "blend", "rank", "split", "pad", "wrap", "fold", "trim", "mask",
]
_NOUNS = [
    "totals", "items", "values", "weights", "scores", "prices", "tokens",
    "pixels", "rows", "samples", "offsets", "bounds", "gains", "labels",
    "edges", "depths",
]
_OPS = [
    ("+", "adding"),
    ("-", "subtracting"),
    ("*", "multiplying by"),
    ("//", "floor-dividing by"),
    ("%", "taking the remainder modulo"),
]

_PY_BODIES = [
    "def {name}(xs, k):\n    out = []\n    for x in xs:\n        out.append(x {op} k)\n    return out\n",
    "def {name}(xs, k):\n    total = 0\n    for x in xs:\n        total = total {op} x\n    return total {op} k\n",
    "def {name}(xs, k):\n    if not xs:\n        return []\n    return [x {op} k for x in xs]\n",
    "def {name}(xs, k):\n    out = []\n    i = 0\n    while i < len(xs):\n        if xs[i] > k:\n            out.append(xs[i] {op} k)\n        i = i + 1\n    return out\n",
]

_DOC_TEMPLATES = [
    "Return the {noun} after {opdoc} {k} for each element.",
    "Walk the {noun} and build a new list by {opdoc} {k}.",
    "Reduce the {noun} to one result, {opdoc} {k} at the end.",
    "Keep the large {noun} and adjust them by {opdoc} {k}.",
]


def synthetic_corpus(n: int, seed: int = 0, language: str = "python") -> list[Sample]:
    """n distinct code/doc pairs from templated small functions.

    Samples share boilerplate tokens (def/return/for) the way real corpora
    share syntax, while names, operators, and constants keep every pair
    distinct. Deterministic for a fixed (n, seed).
    """
    rng = np.random.default_rng(seed)
    combos = [
        (v, nn, o) for v in range(len(_VERBS)) for nn in range(len(_NOUNS)) for o in range(len(_OPS))
    ]
    picks = rng.permutation(len(combos))[:n]
    if n > len(combos):
        raise ValueError(f"synthetic corpus supports at most {len(combos)} samples")
    samples = []
    for i, pick in enumerate(picks):
        v, nn, o = combos[pick]
        op, opdoc = _OPS[o]
        k = int(rng.integers(2, 17))
        name = f"{_VERBS[v]}_{_NOUNS[nn]}"
        body = _PY_BODIES[i % len(_PY_BODIES)]
        code = body.format(name=name, op=op)
        doc = f"{_VERBS[v].capitalize()} the {_NOUNS[nn]}: " + _DOC_TEMPLATES[
            i % len(_DOC_TEMPLATES)
        ].format(noun=_NOUNS[nn], opdoc=opdoc, k=k)
        samples.append(Sample(id=f"s{i:04d}", language=language, code=code, doc=doc))
    return samples
