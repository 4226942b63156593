"""Frozen Transformer encoders behind a small batch-embedding interface."""

from __future__ import annotations

import logging

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

logger = logging.getLogger(__name__)

POOLING_MODES = ("first-token", "mean")


class HfEncoder:
    """A frozen Hugging Face encoder (hub name or local directory).

    Pooling is the first token of the last hidden layer by default; "mean"
    averages over non-padding positions. Outputs are L2-normalized float64.
    """

    def __init__(self, name_or_path: str, pooling: str = "first-token", max_length: int = 512):
        if pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling mode {pooling!r}; choose from {POOLING_MODES}")
        self.name = name_or_path
        self.pooling = pooling
        self.max_length = max_length
        self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        self.model = AutoModel.from_pretrained(name_or_path)
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        self._truncated = 0

    @property
    def truncated_count(self) -> int:
        return self._truncated

    def model_id(self) -> str:
        return f"{self.name}|pooling={self.pooling}|max_length={self.max_length}"

    @torch.no_grad()
    def embed_batch(self, texts: list[str]) -> np.ndarray:
        lengths = [
            len(self.tokenizer.encode(t, add_special_tokens=True, truncation=False))
            for t in texts
        ]
        over = sum(1 for n in lengths if n > self.max_length)
        if over:
            self._truncated += over
            logger.warning("%d of %d inputs exceed %d tokens; truncating", over, len(texts), self.max_length)
        batch = self.tokenizer(
            texts,
            padding=True,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        )
        hidden = self.model(**batch).last_hidden_state  # (B, L, H)
        if self.pooling == "first-token":
            pooled = hidden[:, 0, :]
        else:
            mask = batch["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        vectors = pooled.to(torch.float64).cpu().numpy()
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return vectors / norms
