"""Build, persist, and query brute-force cosine retrieval indexes.

File layout: one JSON header line (dims, count, fingerprints, per-entry
metadata) followed by a binary vector block in the embedding-store record
layout, plus a JSONL sidecar holding the original samples for display.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from astsearch.corpus import Sample
from astsearch.errors import ContractViolation, DuplicateId, FingerprintMismatch, FormatError
from astsearch.gnn import model_fingerprint
from astsearch.pipeline import Pipeline

logger = logging.getLogger(__name__)

INDEX_FORMAT = "astsearch-index"
INDEX_VERSION = 1


@dataclass
class IndexEntry:
    id: str
    vector: np.ndarray  # unit-norm, float32 on disk
    language: str
    payload_offset: int = -1  # byte offset of this sample's line in the sidecar


@dataclass
class RetrievalIndex:
    dim: int
    entries: list[IndexEntry] = field(default_factory=list)
    model_fingerprint: str = ""
    pipeline_fingerprint: str = ""
    text_provider_fingerprint: str = ""
    payload_path: str | None = None
    errors: list[tuple[str, str]] = field(default_factory=list)  # (sample id, message)

    def matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.stack([np.asarray(e.vector, dtype=np.float64) for e in self.entries])

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]


def build_index(
    samples: list[Sample],
    pipeline: Pipeline,
    text_provider,
    model,
) -> RetrievalIndex:
    """Encode every corpus sample; per-sample failures are recorded and the
    index is still built from the successes."""
    index = RetrievalIndex(
        dim=model.d_out,
        model_fingerprint=model_fingerprint(model),
        pipeline_fingerprint=pipeline.fingerprint(),
        text_provider_fingerprint=text_provider.fingerprint(),
    )
    seen: set[str] = set()
    for sample in samples:
        if sample.id in seen:
            raise DuplicateId(f"duplicate sample id {sample.id!r}")
        seen.add(sample.id)
        try:
            graph, root_emb = pipeline.encode_sample(sample.code, sample.language)
            vector = model.encode(graph, root_emb).data
        except Exception as exc:  # record, keep building
            logger.warning("sample %s failed to encode: %s", sample.id, exc)
            index.errors.append((sample.id, str(exc)))
            continue
        index.entries.append(
            IndexEntry(id=sample.id, vector=vector.astype(np.float32), language=sample.language)
        )
    return index


def query(
    index: RetrievalIndex,
    text: str,
    text_provider,
    k: int = 10,
) -> list[tuple[str, float]]:
    """Exact top-k by cosine similarity, descending, ties to the lower id.

    Refuses providers whose fingerprint differs from the one the index was
    built with; k larger than the index returns everything.
    """
    if k <= 0:
        raise ContractViolation(f"k must be positive, got {k}")
    fp = text_provider.fingerprint()
    if fp != index.text_provider_fingerprint:
        raise FingerprintMismatch(
            f"index was built with text provider {index.text_provider_fingerprint!r}, "
            f"queried with {fp!r}"
        )
    if not index.entries:
        return []
    vec = np.asarray(text_provider.embed_text(text), dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm:
        vec = vec / norm
    scores = index.matrix() @ vec
    ids = index.ids()
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))[:k]
    return [(ids[i], float(scores[i])) for i in order]


def save_index(index: RetrievalIndex, path: str | Path, samples: list[Sample] | None = None) -> None:
    """Write header + vector block; `samples` (if given) become the sidecar
    payload, and entry offsets are filled in."""
    path = Path(path)
    payload_name = path.name + ".payload.jsonl"
    if samples is not None:
        by_id = {s.id: s for s in samples}
        offset = 0
        with open(path.parent / payload_name, "wb") as fh:
            for entry in index.entries:
                sample = by_id.get(entry.id)
                if sample is None:
                    continue
                line = (
                    json.dumps(
                        {
                            "id": sample.id,
                            "language": sample.language,
                            "code": sample.code,
                            "doc": sample.doc,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                ).encode("utf-8")
                entry.payload_offset = offset
                fh.write(line)
                offset += len(line)
        index.payload_path = payload_name

    header = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "dim": index.dim,
        "count": len(index.entries),
        "model_fingerprint": index.model_fingerprint,
        "pipeline_fingerprint": index.pipeline_fingerprint,
        "text_provider_fingerprint": index.text_provider_fingerprint,
        "payload": index.payload_path,
        "entries": [
            {"id": e.id, "language": e.language, "offset": e.payload_offset}
            for e in index.entries
        ],
        "errors": [{"id": i, "error": m} for i, m in index.errors],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for entry in index.entries:
            id_bytes = entry.id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(np.asarray(entry.vector, dtype="<f4").tobytes())


def load_index(path: str | Path) -> RetrievalIndex:
    path = Path(path)
    data = path.read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise FormatError("index file has no header line", offset=0)
    try:
        header = json.loads(data[:newline].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"bad index header: {exc}", offset=0) from exc
    if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
        raise FormatError(f"not a version-{INDEX_VERSION} {INDEX_FORMAT} file")
    dim = int(header["dim"])
    index = RetrievalIndex(
        dim=dim,
        model_fingerprint=header["model_fingerprint"],
        pipeline_fingerprint=header["pipeline_fingerprint"],
        text_provider_fingerprint=header["text_provider_fingerprint"],
        payload_path=header.get("payload"),
        errors=[(e["id"], e["error"]) for e in header.get("errors", [])],
    )
    meta = {e["id"]: e for e in header.get("entries", [])}
    offset = newline + 1
    vec_bytes = 4 * dim
    for _ in range(int(header["count"])):
        try:
            (id_len,) = struct.unpack_from("<I", data, offset)
        except struct.error as exc:
            raise FormatError(f"truncated record: {exc}", offset=offset) from exc
        offset += 4
        entry_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        if offset + vec_bytes > len(data):
            raise FormatError("truncated vector block", offset=offset)
        vector = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        entry_meta = meta.get(entry_id, {})
        index.entries.append(
            IndexEntry(
                id=entry_id,
                vector=vector,
                language=entry_meta.get("language", ""),
                payload_offset=entry_meta.get("offset", -1),
            )
        )
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes", offset=offset)
    return index


def read_payload(index: RetrievalIndex, index_path: str | Path, entry: IndexEntry) -> dict | None:
    """Fetch one sample's JSON line from the sidecar via its stored offset."""
    if index.payload_path is None or entry.payload_offset < 0:
        return None
    sidecar = Path(index_path).parent / index.payload_path
    with open(sidecar, "rb") as fh:
        fh.seek(entry.payload_offset)
        return json.loads(fh.readline().decode("utf-8"))
