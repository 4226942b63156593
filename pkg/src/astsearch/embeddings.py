"""Unit-norm text embeddings: deterministic hashing embedder and file-backed stores.

The hashing embedder stands in for a frozen Transformer encoder at desk
scale; store-backed providers serve precomputed encoder embeddings from the
binary store format (see save_store / load_store).
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from astsearch.errors import ContractViolation, FormatError, MissingEmbedding

logger = logging.getLogger(__name__)

MAGIC = b"EMBS"
FORMAT_VERSION = 1


def normalize(vec: np.ndarray) -> np.ndarray:
    """L2-normalize; the zero vector is returned unchanged."""
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec
    return vec / norm


def content_key(text: str) -> str:
    """Stable lookup key for per-node content embeddings.

    Part of the store interface: exporters writing content-keyed stores must
    derive keys the same way.
    """
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


def hash_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Feature-hash character 3-grams into a unit vector.

    Each 3-gram lands in a seeded-hash bucket with a +-1 sign; the result is
    L2-normalized. The empty text (and the rare exact cancellation) maps to
    the first basis vector. Deterministic across runs and platforms.
    """
    if dim < 8:
        raise ContractViolation(f"hash_embed needs dim >= 8, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    if not text:
        vec[0] = 1.0
        return vec
    grams = [text[i : i + 3] for i in range(len(text) - 2)] if len(text) >= 3 else [text]
    key = str(seed).encode("utf-8")
    for gram in grams:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest()
        value = int.from_bytes(digest, "little")
        bucket = value % dim
        sign = 1.0 if value >> 63 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[:] = 0.0
        vec[0] = 1.0
        return vec
    return vec / norm


class HashingProvider:
    """Deterministic built-in embedder; the desk-scale encoder stand-in."""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def embed_text(self, text: str, key: str | None = None) -> np.ndarray:
        return hash_embed(text, self.dim, self.seed)

    def fingerprint(self) -> str:
        return f"hash:dim={self.dim}:seed={self.seed}"


@dataclass
class EmbeddingStore:
    """In-memory map id -> fixed-dimension vector, with a binary file format."""

    dim: int
    model_id: str
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, entry_id: str, vec: np.ndarray) -> None:
        arr = np.asarray(vec, dtype=np.float32)
        if arr.shape != (self.dim,):
            raise ContractViolation(f"vector for {entry_id!r} has shape {arr.shape}, want ({self.dim},)")
        self.entries[entry_id] = arr

    def get(self, entry_id: str) -> np.ndarray | None:
        return self.entries.get(entry_id)

    def __len__(self) -> int:
        return len(self.entries)


class StoreProvider:
    """Serves embeddings from a store; misses fall back to the hashing embedder.

    Lookup tries the caller-supplied sample id first (stores exported in
    sample-id mode), then the content hash of the text (stores exported in
    content-hash mode). With ``strict=True`` a miss raises MissingEmbedding
    instead of falling back.
    """

    def __init__(self, store: EmbeddingStore, strict: bool = False, fallback_seed: int = 0):
        self.store = store
        self.dim = store.dim
        self.strict = strict
        self.fallback_seed = fallback_seed
        self._warned = 0

    def embed_text(self, text: str, key: str | None = None) -> np.ndarray:
        keys = ([key] if key is not None else []) + [content_key(text)]
        for lookup in keys:
            vec = self.store.get(lookup)
            if vec is not None:
                return np.asarray(vec, dtype=np.float64)
        if self.strict:
            raise MissingEmbedding(f"store {self.store.model_id!r} has no entry for keys {keys!r}")
        if self._warned < 5:
            logger.warning("store miss for keys %r; falling back to hash embedding", keys)
        self._warned += 1
        return hash_embed(text, self.dim, self.fallback_seed)

    def fingerprint(self) -> str:
        return f"store:{self.store.model_id}:dim={self.dim}:count={len(self.store)}"


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the binary store format.

    Layout: magic "EMBS", u32 version, u32 dim, u64 count, u32-length-prefixed
    model_id, then per record: u32 id length, id bytes, dim float32; all
    little-endian. Records are written in insertion order.
    """
    path = Path(path)
    model_bytes = store.model_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", FORMAT_VERSION, store.dim, len(store.entries)))
        fh.write(struct.pack("<I", len(model_bytes)))
        fh.write(model_bytes)
        for entry_id, vec in store.entries.items():
            id_bytes = entry_id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def load_store(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    offset = 4
    try:
        version, dim, count = struct.unpack_from("<IIQ", data, offset)
    except struct.error as exc:
        raise FormatError(f"truncated header: {exc}", offset=offset) from exc
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported store version {version}", offset=4)
    offset += 16
    try:
        (model_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        model_id = data[offset : offset + model_len].decode("utf-8")
        offset += model_len
        store = EmbeddingStore(dim=dim, model_id=model_id)
        vec_bytes = 4 * dim
        for _ in range(count):
            (id_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            entry_id = data[offset : offset + id_len].decode("utf-8")
            offset += id_len
            if offset + vec_bytes > len(data):
                raise FormatError("truncated vector record", offset=offset)
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
            offset += vec_bytes
            if entry_id in store.entries:
                raise FormatError(f"duplicate id {entry_id!r}", offset=offset)
            store.entries[entry_id] = vec
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed record: {exc}", offset=offset) from exc
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after last record", offset=offset)
    return store


def store_from_jsonl(path: str | Path, model_id: str = "jsonl-import") -> EmbeddingStore:
    """Convert a JSONL file of {"id": ..., "vector": [...]} records to a store."""
    store: EmbeddingStore | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entry_id = obj["id"]
                vec = np.asarray(obj["vector"], dtype=np.float32)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
            if store is None:
                store = EmbeddingStore(dim=int(vec.shape[0]), model_id=model_id)
            store.add(str(entry_id), vec)
    if store is None:
        raise FormatError("JSONL import contained no records")
    return store
