"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from astsearch.corpus import synthetic_corpus
from astsearch.embeddings import HashingProvider
from astsearch.graph import TypeVocabulary, initialize_features
from astsearch.refine import refine_ast
from astsearch.syntax import container_kinds_for, parse_source

MEAN_SOURCE = "def mean(data):\n    return sum(data)/len(data)"


@pytest.fixture(scope="session")
def mean_ast():
    return parse_source(MEAN_SOURCE, "python")


@pytest.fixture(scope="session")
def mean_refined(mean_ast):
    return refine_ast(mean_ast, container_kinds_for("python"))


@pytest.fixture(scope="session")
def python_vocab():
    return TypeVocabulary.for_language("python")


@pytest.fixture()
def hashing_provider():
    return HashingProvider(dim=16, seed=0)


@pytest.fixture()
def mean_graph(mean_refined, python_vocab, hashing_provider):
    return initialize_features(mean_refined, python_vocab, hashing_provider)


@pytest.fixture(scope="session")
def tiny_corpus():
    return synthetic_corpus(16, seed=0)


def finite_difference(fn, params, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    fn(params) must build a fresh scalar Tensor each call; params are
    Tensors whose .data is perturbed in place.
    """
    out = fn(params)
    for p in params:
        p.zero_grad()
    out = fn(params)
    out.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    for p in params:
        p.zero_grad()
    worst = 0.0
    for p, grad in zip(params, analytic):
        numeric = np.zeros_like(np.atleast_1d(p.data), dtype=np.float64)
        flat = np.atleast_1d(p.data).reshape(-1)
        view = p.data.reshape(-1) if p.data.ndim else None
        for i in range(flat.size):
            if view is not None:
                old = view[i]
                view[i] = old + step
                hi = float(fn(params).data)
                view[i] = old - step
                lo = float(fn(params).data)
                view[i] = old
            else:
                old = float(p.data)
                p.data = np.float64(old + step)
                hi = float(fn(params).data)
                p.data = np.float64(old - step)
                lo = float(fn(params).data)
                p.data = np.float64(old)
            numeric.reshape(-1)[i] = (hi - lo) / (2.0 * step)
        flat_analytic = np.atleast_1d(grad).reshape(-1)
        flat_numeric = numeric.reshape(-1)
        denom = max(np.abs(flat_numeric).max(initial=0.0), np.abs(flat_analytic).max(initial=0.0), 1e-8)
        worst = max(worst, float(np.abs(flat_numeric - flat_analytic).max(initial=0.0)) / denom)
    return worst
