"""Symmetric in-batch contrastive alignment loss.

L = (L_code + L_text) / 2 where each side is the mean cross-entropy of the
matching pair against all in-batch candidates, over cosine similarities
scaled by a learnable temperature. The code->text and text->code directions
share one similarity matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from astsearch.errors import ContractViolation
from astsearch.tensor import Tensor, l2_normalize

logger = logging.getLogger(__name__)

TAU_MIN = 1e-3


def clip_loss(codes: Tensor, texts: Tensor, tau: Tensor) -> Tensor:
    """Loss on the tape; differentiable in codes, texts, and tau.

    Rows are cosine-normalized internally, so callers may pass raw vectors.
    """
    n = codes.shape[0]
    if n < 2:
        raise ContractViolation(f"contrastive loss needs at least 2 pairs, got {n}")
    if codes.shape != texts.shape:
        raise ContractViolation(f"code/text shapes differ: {codes.shape} vs {texts.shape}")
    sims = l2_normalize(codes) @ l2_normalize(texts).T
    logits = sims / tau
    diag = (logits * Tensor(np.eye(n))).sum()
    loss_code = (logits.logsumexp(axis=1).sum() - diag) / float(n)
    loss_text = (logits.logsumexp(axis=0).sum() - diag) / float(n)
    return (loss_code + loss_text) * 0.5


@dataclass
class ContrastiveLossResult:
    loss: float
    grad_codes: np.ndarray  # dL/dC
    grad_texts: np.ndarray  # dL/dT; computed but never applied to a provider
    grad_tau: float


def contrastive_loss(
    codes: np.ndarray, texts: np.ndarray, tau: float
) -> ContrastiveLossResult:
    """Loss value plus analytic gradients for a plain-array batch.

    tau <= 0 is clamped to TAU_MIN with a warning.
    """
    if tau <= 0.0:
        logger.warning("temperature %g <= 0; clamped to %g", tau, TAU_MIN)
        tau = TAU_MIN
    c = Tensor(np.asarray(codes, dtype=np.float64), requires_grad=True)
    t = Tensor(np.asarray(texts, dtype=np.float64), requires_grad=True)
    tau_t = Tensor(float(tau), requires_grad=True)
    out = clip_loss(c, t, tau_t)
    out.backward()
    return ContrastiveLossResult(
        loss=out.item(),
        grad_codes=c.grad.copy(),
        grad_texts=t.grad.copy(),
        grad_tau=float(tau_t.grad),
    )
