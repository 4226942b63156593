"""Retrieval metrics (MRR, Recall@K) and embedding-distribution statistics.

The distribution metric reports, per text embedding, the mean cosine
similarity against every code embedding; a mean near zero with small spread
indicates well-separated code embeddings. The transpose statistic does the
same per code embedding against all texts; the two share their grand mean
exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from astsearch.errors import ContractViolation

logger = logging.getLogger(__name__)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a||b|); zero vectors compare as 0 with a warning."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        logger.warning("cosine similarity of a zero vector is defined as 0")
        return 0.0
    return float(a @ b / (na * nb))


def mrr(ranks: list[int]) -> float:
    """Mean of 1/rank over queries; ranks are 1-based."""
    if not ranks:
        raise ContractViolation("mrr needs at least one rank")
    return float(np.mean([1.0 / r for r in ranks]))


def recall_at_k(ranks: list[int], k: int) -> float:
    """Fraction of queries whose ground truth ranks within the top k."""
    if k <= 0:
        raise ContractViolation(f"k must be positive, got {k}")
    if not ranks:
        raise ContractViolation("recall_at_k needs at least one rank")
    return float(np.mean([1.0 if r <= k else 0.0 for r in ranks]))


def mam(code_embeddings: np.ndarray, text_embedding: np.ndarray) -> float:
    """Mean cosine similarity of one text embedding against all codes."""
    codes = np.asarray(code_embeddings, dtype=np.float64)
    return float(np.mean([cosine_sim(c, text_embedding) for c in codes]))


@dataclass
class MamReport:
    per_text: np.ndarray   # mean similarity of each text against all codes
    per_code: np.ndarray   # mean similarity of each code against all texts
    mean: float
    sd: float              # population SD of per_text
    mean_prime: float
    sd_prime: float        # population SD of per_code


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return mat / safe


def mam_report(code_embeddings: np.ndarray, text_embeddings: np.ndarray) -> MamReport:
    """Full distribution report over the code x text similarity matrix.

    Uses population standard deviations; asserts the shared-mean identity
    between the per-text and per-code statistics.
    """
    codes = _unit_rows(np.asarray(code_embeddings, dtype=np.float64))
    texts = _unit_rows(np.asarray(text_embeddings, dtype=np.float64))
    sims = codes @ texts.T  # n_codes x n_texts
    per_text = sims.mean(axis=0)
    per_code = sims.mean(axis=1)
    mean = float(per_text.mean())
    mean_prime = float(per_code.mean())
    if abs(mean - mean_prime) > 1e-12:
        raise ContractViolation(
            f"grand-mean identity violated: {mean} vs {mean_prime}"
        )
    return MamReport(
        per_text=per_text,
        per_code=per_code,
        mean=mean,
        sd=float(per_text.std()),
        mean_prime=mean_prime,
        sd_prime=float(per_code.std()),
    )


@dataclass
class RankingResult:
    query_id: str
    rank: int  # 1-based rank of the ground-truth item


@dataclass
class RetrievalReport:
    mrr: float
    recall: dict[int, float]
    mam: MamReport
    ranks: list[RankingResult]
    n_queries: int
    excluded: list[str]  # query ids whose ground truth was missing from the pool

    def to_json_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
            "mam": {
                "mean": self.mam.mean,
                "sd": self.mam.sd,
                "mean_prime_sd": self.mam.sd_prime,
            },
            "n_queries": self.n_queries,
            "excluded": len(self.excluded),
        }


def rank_of(scores: np.ndarray, candidate_ids: list[str], target_id: str) -> int:
    """1-based rank of target under descending score, ties to the lower id."""
    order = sorted(range(len(candidate_ids)), key=lambda i: (-scores[i], candidate_ids[i]))
    for position, idx in enumerate(order, 1):
        if candidate_ids[idx] == target_id:
            return position
    raise ContractViolation(f"target {target_id!r} not among candidates")


def evaluate_retrieval(
    pool_ids: list[str],
    pool_vectors: np.ndarray,
    queries: list[tuple[str, np.ndarray, str]],  # (query id, embedding, ground-truth pool id)
    ks: tuple[int, ...] = (1, 5, 10),
) -> RetrievalReport:
    """Rank each query's ground truth by cosine similarity over the pool.

    Queries whose ground truth is absent from the pool are excluded and
    counted, never silently scored.
    """
    pool = _unit_rows(np.asarray(pool_vectors, dtype=np.float64))
    id_set = set(pool_ids)
    ranks: list[RankingResult] = []
    excluded: list[str] = []
    text_vectors = []
    for query_id, vec, truth_id in queries:
        vec = np.asarray(vec, dtype=np.float64)
        text_vectors.append(vec)
        if truth_id not in id_set:
            excluded.append(query_id)
            continue
        norm = float(np.linalg.norm(vec))
        unit = vec / norm if norm else vec
        scores = pool @ unit
        ranks.append(RankingResult(query_id=query_id, rank=rank_of(scores, pool_ids, truth_id)))
    if not ranks:
        raise ContractViolation("no query had its ground truth in the pool")
    rank_values = [r.rank for r in ranks]
    report = mam_report(pool, np.stack(text_vectors))
    return RetrievalReport(
        mrr=mrr(rank_values),
        recall={k: recall_at_k(rank_values, k) for k in ks},
        mam=report,
        ranks=ranks,
        n_queries=len(ranks),
        excluded=excluded,
    )
