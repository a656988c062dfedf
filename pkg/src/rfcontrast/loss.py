"""Soft nearest-neighbor contrastive loss and its symmetrized form.

Per query q_i the loss scores the probability mass that a distance-based soft
assignment over the batch's keys puts on keys from the same transmission:

    L = -(1/N) * sum_i log( sum_{j: y_j = y_i} exp(-||q_i - k_j||^2 / tau)
                            / sum_{all j}      exp(-||q_i - k_j||^2 / tau) )

The numerator includes j = i and the denominator ranges over every key. The
fast path expands the squared distances through one matrix product and
evaluates both log-sums with per-row max subtraction; `snn_loss_reference` is
a deliberately naive double loop kept as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch


@dataclass
class ContrastiveBatch:
    """Paired query/key embeddings with transmission labels.

    q: N x d predictor outputs, k: N x d momentum outputs, y: N integer
    transmission ids, tau > 0. Rows are expected unit-norm when the encoder's
    normalization is on, but the loss itself only requires finite inputs.
    """

    q: torch.Tensor
    k: torch.Tensor
    y: torch.Tensor
    tau: float = 0.2


def _pairwise_sq_dists(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    qq = (q * q).sum(dim=1, keepdim=True)
    kk = (k * k).sum(dim=1, keepdim=True).transpose(0, 1)
    return qq + kk - 2.0 * (q @ k.transpose(0, 1))


def _masked_logsumexp(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    # One shared per-row max for every mask, so the all-positives case cancels
    # bit-for-bit against the full denominator.
    m = logits.max(dim=1, keepdim=True).values
    s = (torch.exp(logits - m) * mask).sum(dim=1)
    return m.squeeze(1) + torch.log(s)


def snn_loss(batch: ContrastiveBatch) -> torch.Tensor:
    """Soft nearest-neighbor loss over one batch; differentiable w.r.t. q and k."""
    q, k, y, tau = batch.q, batch.k, batch.y, batch.tau
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if q.shape != k.shape or q.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: q {tuple(q.shape)}, k {tuple(k.shape)}, "
                         f"y {tuple(y.shape)}")
    if torch.isnan(q).any() or torch.isnan(k).any():
        raise ValueError("NaN in embeddings")

    logits = -_pairwise_sq_dists(q, k) / tau
    positives = (y.unsqueeze(1) == y.unsqueeze(0)).to(logits.dtype)
    lse_all = _masked_logsumexp(logits, torch.ones_like(logits))
    lse_pos = _masked_logsumexp(logits, positives)
    return (lse_all - lse_pos).mean()


def symmetrized_loss(q_w: torch.Tensor, k_s: torch.Tensor,
                     q_s: torch.Tensor, k_w: torch.Tensor,
                     y: torch.Tensor, tau: float = 0.2) -> torch.Tensor:
    """2*tau*[L(q_w, k_s) + L(q_s, k_w)]: both views predict each other."""
    if not (q_w.shape == k_s.shape == q_s.shape == k_w.shape):
        raise ValueError("all four embedding matrices must share one shape")
    return 2.0 * tau * (snn_loss(ContrastiveBatch(q_w, k_s, y, tau))
                        + snn_loss(ContrastiveBatch(q_s, k_w, y, tau)))


def snn_loss_reference(q, k, y, tau: float = 0.2) -> float:
    """Independent O(N^2) double-loop oracle; no vectorization, no shared code."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    y = [int(v) for v in np.asarray(y).ravel()]
    n = q.shape[0]
    total = 0.0
    for i in range(n):
        same = 0.0
        everyone = 0.0
        for j in range(n):
            d2 = 0.0
            for c in range(q.shape[1]):
                d2 += (q[i, c] - k[j, c]) ** 2
            w = math.exp(-d2 / tau)
            everyone += w
            if y[j] == y[i]:
                same += w
        total += math.log(same / everyone)
    return -total / n


def grad_check(loss_fn, batch: ContrastiveBatch, epsilon: float = 1e-5) -> float:
    """Analytic gradient w.r.t. q against central finite differences.

    Returns the largest entrywise deviation relative to the largest gradient
    magnitude in the batch (floored at 1e-12 so an identically-zero gradient
    reports 0 rather than NaN). Intended for small batches in float64.
    """
    q = batch.q.detach().to(torch.float64).requires_grad_(True)
    k = batch.k.detach().to(torch.float64)
    analytic = torch.autograd.grad(
        loss_fn(ContrastiveBatch(q, k, batch.y, batch.tau)), q)[0]

    q0 = q.detach().clone()
    fd = torch.zeros_like(q0)
    for i in range(q0.shape[0]):
        for c in range(q0.shape[1]):
            qp = q0.clone()
            qp[i, c] += epsilon
            qm = q0.clone()
            qm[i, c] -= epsilon
            up = loss_fn(ContrastiveBatch(qp, k, batch.y, batch.tau))
            down = loss_fn(ContrastiveBatch(qm, k, batch.y, batch.tau))
            fd[i, c] = (up - down) / (2 * epsilon)

    scale = max(analytic.abs().max().item(), fd.abs().max().item(), 1e-12)
    return ((analytic - fd).abs().max() / scale).item()
