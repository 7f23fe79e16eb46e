"""Adaptation losses (neighbour contrastive, pseudo-label contrastive, diversity)
and the label-smoothed cross-entropy used for source pre-training.

Contrastive terms take the live batch features (gradient flows through them)
and the memory banks (constants). Anchors are the batch rows; the softmax
denominator for anchor ``i`` runs over every bank row except row ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .banks import FeatureBank, ScoreBank, knn_many, same_class_mask
from .errors import ConfigError, DataError, DimensionError
from .grad import (Tensor, add, l2_normalize_rows, log, logsumexp_rows, matmul, mean, mul,
                   scale, sum_)

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    ncl: float
    scl: float
    div: float
    total: float
    lam: float
    beta: float
    div_weight: float = 1.0

    def as_dict(self):
        return {"ncl": self.ncl, "scl": self.scl, "div": self.div, "total": self.total}


def _contrastive(batch_features, batch_indices, bank: FeatureBank, tau, weights):
    """Mean over anchors of ``sum_j w_ij * (logsumexp_{m != i} s_im/tau - s_ij/tau)``."""
    idx = np.asarray(batch_indices, dtype=np.intp)
    n_bank = len(bank)
    if n_bank < 2:
        raise ConfigError("contrastive losses need at least two target samples")
    if batch_features.ndim != 2 or batch_features.shape[0] != len(idx):
        raise DimensionError("one batch feature row per batch index is required")
    if batch_features.shape[0] == 0:
        raise DimensionError("empty batch")
    if batch_features.shape[1] != bank.rows.shape[1]:
        raise DimensionError("batch feature width differs from bank width")
    z = l2_normalize_rows(batch_features)
    logits = scale(matmul(z, Tensor(bank.rows.T)), 1.0 / tau)
    keep = np.ones((len(idx), n_bank), dtype=bool)
    keep[np.arange(len(idx)), idx] = False
    lse = logsumexp_rows(logits, keep)
    positive = sum_(mul(logits, Tensor(weights)), axis=1)
    per_anchor = add(mul(lse, Tensor(weights.sum(axis=1))), scale(positive, -1.0))
    return mean(per_anchor)


def ncl_loss(batch_features, batch_indices, feature_bank: FeatureBank, tau=0.05, k=1):
    """Nearest-neighbour InfoNCE: each anchor's ``k`` cosine neighbours in the bank are positives."""
    if len(feature_bank) < 2:
        raise ConfigError("contrastive losses need at least two target samples")
    idx = np.asarray(batch_indices, dtype=np.intp)
    neighbours = knn_many(feature_bank, idx, k)
    weights = np.zeros((len(idx), len(feature_bank)))
    np.put_along_axis(weights, neighbours, 1.0, axis=1)
    return _contrastive(batch_features, idx, feature_bank, tau, weights)


def scl_loss(batch_features, batch_indices, feature_bank: FeatureBank, score_bank: ScoreBank, tau=0.05):
    """Supervised contrastive loss with score-bank argmax as the pseudo-label.

    Positives are all other rows sharing the anchor's pseudo-label, each
    weighted ``1/|positives|``; anchors without positives contribute 0.
    """
    idx = np.asarray(batch_indices, dtype=np.intp)
    mask = same_class_mask(score_bank, idx)
    counts = mask.sum(axis=1, keepdims=True)
    weights = np.divide(mask, counts, out=np.zeros(mask.shape), where=counts > 0)
    return _contrastive(batch_features, idx, feature_bank, tau, weights)


def div_loss(batch_probs):
    """``sum_c pbar_c * log(C * pbar_c)``: KL of the batch-mean prediction from uniform."""
    if batch_probs.ndim != 2 or batch_probs.shape[0] == 0:
        raise DimensionError("div_loss expects a non-empty n x C matrix")
    c = batch_probs.shape[1]
    pbar = mean(batch_probs, axis=0)
    return sum_(mul(pbar, add(log(pbar, floor=LOG_FLOOR), math.log(c))))


def objective(ncl, scl, div, lam, beta, div_weight=1.0) -> Tensor:
    """Differentiable weighted total; zero-weight terms are left out of the graph."""
    if lam < 0 or beta < 0 or div_weight < 0:
        raise ConfigError("loss weights must be non-negative")
    total = Tensor(0.0)
    for weight, term in ((div_weight, div), (lam, ncl), (beta, scl)):
        if weight:
            total = add(total, scale(term, weight))
    return total


def total_loss(ncl, scl, div, lam, beta, div_weight=1.0) -> LossBreakdown:
    if lam < 0 or beta < 0 or div_weight < 0:
        raise ConfigError("loss weights must be non-negative")
    ncl, scl, div = (v.item() if isinstance(v, Tensor) else float(v) for v in (ncl, scl, div))
    total = div_weight * div + lam * ncl + beta * scl
    return LossBreakdown(ncl, scl, div, total, float(lam), float(beta), float(div_weight))


def smoothed_targets(labels, class_count, epsilon):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise DataError(f"labels must lie in [0, {class_count})")
    if class_count == 1:
        return np.ones((len(labels), 1))
    off = epsilon / (class_count - 1)
    t = np.full((len(labels), class_count), off)
    t[np.arange(len(labels)), labels] = 1.0 - epsilon
    return t


def ce_label_smoothing(probs, labels, epsilon=0.1):
    """Mean cross-entropy against ``1-eps`` on the true class and ``eps/(C-1)`` elsewhere."""
    if probs.ndim != 2 or probs.shape[0] != len(labels):
        raise DimensionError("one label per probability row is required")
    targets = smoothed_targets(labels, probs.shape[1], epsilon)
    logp = log(probs, floor=LOG_FLOOR)
    return scale(mean(sum_(mul(logp, Tensor(targets)), axis=1)), -1.0)
