"""Writer for the astsearch binary embedding-store format.

Implemented against the documented file layout rather than the astsearch
code so the exporter stays a standalone tool: magic "EMBS", u32 version,
u32 dim, u64 count, u32-length-prefixed model id, then per record a
u32-length-prefixed UTF-8 id followed by dim float32 values; everything
little-endian.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMBS"
VERSION = 1


def content_key(text: str) -> str:
    """Key derivation for content-keyed stores; must match the consumer side."""
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


def write_store(path: str | Path, model_id: str, dim: int, records) -> int:
    """Write (id, vector) records; returns the number written.

    Records may be any iterable of (str, array-like of length dim); vectors
    are stored as little-endian float32.
    """
    path = Path(path)
    model_bytes = model_id.encode("utf-8")
    body = bytearray()
    count = 0
    for entry_id, vector in records:
        arr = np.asarray(vector, dtype="<f4")
        if arr.shape != (dim,):
            raise ValueError(f"vector for {entry_id!r} has shape {arr.shape}, want ({dim},)")
        id_bytes = entry_id.encode("utf-8")
        body += struct.pack("<I", len(id_bytes))
        body += id_bytes
        body += arr.tobytes()
        count += 1
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, dim, count))
        fh.write(struct.pack("<I", len(model_bytes)))
        fh.write(model_bytes)
        fh.write(bytes(body))
    return count
