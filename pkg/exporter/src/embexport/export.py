"""Corpus -> embedding store export jobs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from embexport.encoders import HfEncoder
from embexport.storefmt import content_key, write_store

logger = logging.getLogger(__name__)

KEY_MODES = ("sample-id", "content-hash")


@dataclass
class ExportJob:
    corpus_path: str
    encoder: str
    out_path: str
    field: str = "code"          # which corpus field to embed
    key_mode: str = "sample-id"
    pooling: str = "first-token"
    batch_size: int = 16
    max_length: int = 512

    def validate(self) -> None:
        if self.key_mode not in KEY_MODES:
            raise ValueError(f"key mode must be one of {KEY_MODES}, got {self.key_mode!r}")
        if self.field not in ("code", "doc", "node-contents"):
            raise ValueError(
                f"field must be 'code', 'doc', or 'node-contents', got {self.field!r}"
            )
        if self.field == "node-contents" and self.key_mode != "content-hash":
            raise ValueError("node-contents export requires content-hash keys")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


@dataclass
class ExportResult:
    count: int
    dim: int
    skipped_lines: int
    truncated: int
    model_id: str


def read_samples(path: str | Path):
    """(line number, id, text) triples; malformed lines are skipped and counted."""
    skipped = 0
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rows.append((lineno, str(obj["id"]), obj))
            except (json.JSONDecodeError, KeyError, TypeError):
                skipped += 1
                logger.warning("skipping malformed corpus line %d", lineno)
    return rows, skipped


def read_graph_contents(path: str | Path):
    """Distinct node contents from a JSONL file of graph dumps.

    Each line is the astsearch graph-dump JSON ({"root", "nodes": [{"id",
    "kind", "content"}], "edges"}); contents are deduplicated preserving
    first-seen order. Malformed lines are skipped and counted.
    """
    skipped = 0
    seen: set[str] = set()
    texts: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                contents = [str(node["content"]) for node in obj["nodes"]]
            except (json.JSONDecodeError, KeyError, TypeError):
                skipped += 1
                logger.warning("skipping malformed graph-dump line %d", lineno)
                continue
            for text in contents:
                if text not in seen:
                    seen.add(text)
                    texts.append(text)
    return texts, skipped


def export(job: ExportJob, encoder: HfEncoder | None = None) -> ExportResult:
    """Embed one corpus field and write the binary store.

    Deterministic for a fixed encoder and corpus: records are written in
    corpus order, keyed by sample id or by the content hash of the text.
    The node-contents field reads graph-dump lines instead of corpus rows
    and embeds every distinct node content.
    """
    job.validate()
    if encoder is None:
        encoder = HfEncoder(job.encoder, pooling=job.pooling, max_length=job.max_length)

    if job.field == "node-contents":
        texts, skipped = read_graph_contents(job.corpus_path)
        keyed = [(content_key(t), t) for t in texts]
    else:
        rows, skipped = read_samples(job.corpus_path)
        keyed = []
        for _, sample_id, obj in rows:
            text = str(obj.get(job.field, ""))
            key = sample_id if job.key_mode == "sample-id" else content_key(text)
            keyed.append((key, text))

    records = []
    seen = set()
    for start in range(0, len(keyed), job.batch_size):
        chunk = keyed[start : start + job.batch_size]
        vectors = encoder.embed_batch([text for _, text in chunk])
        for (key, _), vec in zip(chunk, vectors):
            if key in seen:
                logger.warning("duplicate key %r; keeping the first occurrence", key)
                continue
            seen.add(key)
            records.append((key, vec))

    model_id = f"{encoder.model_id()}|field={job.field}|keys={job.key_mode}"
    count = write_store(job.out_path, model_id, encoder.dim, records)
    return ExportResult(
        count=count,
        dim=encoder.dim,
        skipped_lines=skipped,
        truncated=encoder.truncated_count,
        model_id=model_id,
    )
