"""Retrieval and distribution metrics against brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astsearch.errors import ContractViolation
from astsearch.metrics import (
    cosine_sim,
    evaluate_retrieval,
    mam,
    mam_report,
    mrr,
    rank_of,
    recall_at_k,
)

RNG = np.random.default_rng(13)


def unit(v):
    return v / np.linalg.norm(v)


class TestCosineSim:
    def test_same_basis_vector(self):
        e1 = np.array([1.0, 0.0, 0.0])
        assert cosine_sim(e1, e1) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)

    def test_zero_vector_defined_as_zero(self, caplog):
        with caplog.at_level("WARNING"):
            assert cosine_sim(np.zeros(3), np.ones(3)) == 0.0
        assert "zero vector" in caplog.text

    def test_random_fixture_vs_oracle(self):
        for _ in range(20):
            a = RNG.normal(size=6)
            b = RNG.normal(size=6)
            expected = float(sum(x * y for x, y in zip(a, b))) / (
                float(sum(x * x for x in a)) ** 0.5 * float(sum(y * y for y in b)) ** 0.5
            )
            assert cosine_sim(a, b) == pytest.approx(expected, rel=1e-12)


class TestMrrRecall:
    def test_all_first(self):
        assert mrr([1, 1, 1]) == 1.0

    def test_hand_computed(self):
        assert mrr([1, 2, 4]) == pytest.approx((1.0 + 0.5 + 0.25) / 3.0)

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            mrr([])

    def test_recall_hand_computed(self):
        assert recall_at_k([1, 2, 1], 1) == pytest.approx(2.0 / 3.0)

    def test_recall_k_at_least_max_rank(self):
        assert recall_at_k([3, 7, 2], 7) == 1.0

    def test_recall_k_zero_rejected(self):
        with pytest.raises(ContractViolation):
            recall_at_k([1], 0)

    @given(st.lists(st.integers(min_value=1, max_value=50), min_size=1, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_recall1_le_mrr_le_one(self, ranks):
        value = mrr(ranks)
        assert recall_at_k(ranks, 1) <= value + 1e-12
        assert value <= 1.0 + 1e-12


class TestMam:
    def test_orthogonal_codes(self):
        codes = np.array([[1.0, 0.0], [0.0, 1.0]])
        text = np.array([0.0, 0.0, 1.0])[:2] * 0  # orthogonal to both: zero-free form below
        text = np.array([0.0, 0.0])
        # use a 3-d example instead: codes orthogonal to the text
        codes3 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        text3 = np.array([0.0, 0.0, 1.0])
        assert mam(codes3, text3) == pytest.approx(0.0)

    def test_symmetric_similarities_cancel(self):
        # similarities {0.2, 0, -0.2} average to zero
        text = np.array([1.0, 0.0])
        codes = np.array(
            [
                [0.2, float(np.sqrt(1 - 0.04))],
                [0.0, 1.0],
                [-0.2, float(np.sqrt(1 - 0.04))],
            ]
        )
        assert mam(codes, text) == pytest.approx(0.0, abs=1e-12)

    def test_random_fixture_vs_brute_force(self):
        codes = RNG.normal(size=(5, 4))
        texts = RNG.normal(size=(3, 4))
        report = mam_report(codes, texts)
        for j in range(3):
            expected = np.mean([cosine_sim(codes[i], texts[j]) for i in range(5)])
            assert report.per_text[j] == pytest.approx(expected, rel=1e-12)
        for i in range(5):
            expected = np.mean([cosine_sim(codes[i], texts[j]) for j in range(3)])
            assert report.per_code[i] == pytest.approx(expected, rel=1e-12)

    def test_identical_orthonormal_rows_mean_is_one_over_n(self):
        n = 6
        eye = np.eye(n)
        report = mam_report(eye, eye)
        assert report.mean == pytest.approx(1.0 / n)
        assert report.sd == pytest.approx(0.0, abs=1e-15)

    def test_all_equal_similarity(self):
        # every code identical, every text identical: constant similarity s
        code = unit(np.array([1.0, 2.0, 2.0]))
        text = unit(np.array([2.0, 1.0, 2.0]))
        s = float(code @ text)
        codes = np.tile(code, (4, 1))
        texts = np.tile(text, (3, 1))
        report = mam_report(codes, texts)
        assert report.mean == pytest.approx(s, rel=1e-12)
        assert report.sd == pytest.approx(0.0, abs=1e-15)
        assert report.sd_prime == pytest.approx(0.0, abs=1e-15)

    def test_population_sd(self):
        codes = np.array([[1.0, 0.0], [0.0, 1.0]])
        texts = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        report = mam_report(codes, texts)
        values = report.per_text
        expected_sd = float(np.sqrt(np.mean((values - values.mean()) ** 2)))
        assert report.sd == pytest.approx(expected_sd, rel=1e-12)

    @given(
        st.integers(min_value=1, max_value=12),
        st.integers(min_value=1, max_value=12),
        st.integers(min_value=0, max_value=1000),
    )
    @settings(max_examples=120, deadline=None)
    def test_grand_mean_identity(self, n_codes, n_texts, seed):
        rng = np.random.default_rng(seed)
        codes = rng.normal(size=(n_codes, 3))
        texts = rng.normal(size=(n_texts, 3))
        report = mam_report(codes, texts)
        assert abs(report.mean - report.mean_prime) <= 1e-12
        assert np.all(np.abs(report.per_text) <= 1.0 + 1e-12)
        assert np.all(np.abs(report.per_code) <= 1.0 + 1e-12)


class TestEvaluateRetrieval:
    def test_exact_match_ranks_first(self):
        pool_ids = ["a", "b", "c"]
        pool = np.eye(3)
        queries = [("q", pool[1].copy(), "b")]
        report = evaluate_retrieval(pool_ids, pool, queries, ks=(1,))
        assert report.mrr == 1.0
        assert report.ranks[0].rank == 1

    def test_adversarial_ties_are_id_ordered(self):
        pool_ids = ["z", "a", "m"]
        pool = np.tile(np.array([1.0, 0.0]), (3, 1))  # all identical vectors
        queries = [("q", np.array([1.0, 0.0]), "z")]
        report = evaluate_retrieval(pool_ids, pool, queries, ks=(1,))
        # ties resolve a < m < z, so "z" lands at rank 3, deterministically
        assert report.ranks[0].rank == 3

    def test_rank_of_tie_break(self):
        scores = np.array([0.5, 0.5, 0.5])
        assert rank_of(scores, ["c", "a", "b"], "c") == 3
        assert rank_of(scores, ["c", "a", "b"], "a") == 1

    def test_twenty_pair_synthetic_vs_oracle(self):
        rng = np.random.default_rng(5)
        n, d = 20, 16
        pool = rng.normal(size=(n, d))
        pool /= np.linalg.norm(pool, axis=1, keepdims=True)
        ids = [f"p{i:02d}" for i in range(n)]
        queries = []
        for i in range(n):
            q = unit(pool[i] + 0.5 * rng.normal(size=d))
            queries.append((f"q{i}", q, ids[i]))
        report = evaluate_retrieval(ids, pool, queries, ks=(1, 5, 10))

        # brute-force oracle over explicit loops
        expected_ranks = []
        for _, q, truth in queries:
            sims = [(float(pool[j] @ q / np.linalg.norm(q)), ids[j]) for j in range(n)]
            ordered = sorted(sims, key=lambda pair: (-pair[0], pair[1]))
            expected_ranks.append(1 + [pid for _, pid in ordered].index(truth))
        assert [r.rank for r in report.ranks] == expected_ranks
        assert report.mrr == pytest.approx(np.mean([1.0 / r for r in expected_ranks]))
        for k in (1, 5, 10):
            assert report.recall[k] == pytest.approx(
                np.mean([1.0 if r <= k else 0.0 for r in expected_ranks])
            )

    def test_missing_ground_truth_excluded_and_counted(self):
        pool_ids = ["a", "b"]
        pool = np.eye(2)
        queries = [("q1", pool[0].copy(), "a"), ("q2", pool[1].copy(), "ghost")]
        report = evaluate_retrieval(pool_ids, pool, queries, ks=(1,))
        assert report.n_queries == 1
        assert report.excluded == ["q2"]

    def test_all_missing_rejected(self):
        with pytest.raises(ContractViolation):
            evaluate_retrieval(["a"], np.eye(1), [("q", np.ones(1), "ghost")])

    def test_report_json_shape(self):
        pool_ids = ["a", "b", "c"]
        pool = np.eye(3)
        queries = [("q", pool[0].copy(), "a")]
        payload = evaluate_retrieval(pool_ids, pool, queries, ks=(1, 5)).to_json_dict()
        assert set(payload) == {"mrr", "recall", "mam", "n_queries", "excluded"}
        assert set(payload["recall"]) == {"1", "5"}
        assert set(payload["mam"]) == {"mean", "sd", "mean_prime_sd"}
