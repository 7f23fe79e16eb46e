"""Per-sample feature and score memory banks for the target corpus."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError
from .grad import normalize_rows


def _normalize(rows: np.ndarray) -> np.ndarray:
    return normalize_rows(rows)[0]


class FeatureBank:
    """L2-normalized features, row ``i`` always belonging to target sample ``i``."""

    def __init__(self, rows):
        self.rows = _normalize(np.array(rows, dtype=np.float64))

    def __len__(self):
        return len(self.rows)

    def similarities(self, anchors) -> np.ndarray:
        return self.rows[np.asarray(anchors)] @ self.rows.T


class ScoreBank:
    """Softmax scores aligned with :class:`FeatureBank`."""

    def __init__(self, rows):
        self.rows = np.array(rows, dtype=np.float64)

    def __len__(self):
        return len(self.rows)

    def pseudo_labels(self) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. lowest class index on ties
        return np.argmax(self.rows, axis=1)


def init_banks(model, target, batch_size=256):
    """One forward pass over the target corpus (or raw sample matrix) to fill both banks."""
    x = np.asarray(getattr(target, "features", target), dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ConfigError("cannot build banks for an empty target corpus")
    feats, probs = [], []
    for start in range(0, len(x), batch_size):
        f, p = model.forward(x[start:start + batch_size])
        feats.append(f.data)
        probs.append(p.data)
    return FeatureBank(np.vstack(feats)), ScoreBank(np.vstack(probs))


def update(feature_bank: FeatureBank, score_bank: ScoreBank, batch_indices, features, probs):
    """Overwrite the batch rows with current outputs; the stored copies carry no graph."""
    idx = np.asarray(batch_indices, dtype=np.intp)
    f = getattr(features, "data", features)
    p = getattr(probs, "data", probs)
    if len(f) != len(idx) or len(p) != len(idx):
        raise DimensionError("features/probs row counts must match the index count")
    n = len(feature_bank)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"bank index out of range [0, {n})")
    feature_bank.rows[idx] = _normalize(np.array(f, dtype=np.float64))
    score_bank.rows[idx] = np.array(p, dtype=np.float64)


def knn(bank: FeatureBank, anchor_index: int, k: int) -> list:
    return knn_many(bank, [anchor_index], k)[0].tolist()


def knn_many(bank: FeatureBank, anchors, k: int) -> np.ndarray:
    """Top-``k`` cosine neighbours of each anchor, excluding the anchor itself.

    Ties go to the lower index. Returns an ``len(anchors) x k`` index array.
    """
    n = len(bank)
    if not 1 <= k <= n - 1:
        raise ConfigError(f"k must lie in [1, {n - 1}], got {k}")
    anchors = np.asarray(anchors, dtype=np.intp)
    if anchors.size and (anchors.min() < 0 or anchors.max() >= n):
        raise IndexError(f"anchor index out of range [0, {n})")
    sims = bank.similarities(anchors)
    sims[np.arange(len(anchors)), anchors] = -np.inf
    order = np.argsort(-sims, axis=1, kind="stable")
    return order[:, :k]


def same_class_set(score_bank: ScoreBank, anchor_index: int) -> list:
    labels = score_bank.pseudo_labels()
    hits = np.flatnonzero(labels == labels[anchor_index])
    return [int(j) for j in hits if j != anchor_index]


def same_class_mask(score_bank: ScoreBank, anchors) -> np.ndarray:
    """Boolean ``len(anchors) x N`` mask of same-pseudo-label rows, anchors excluded."""
    labels = score_bank.pseudo_labels()
    anchors = np.asarray(anchors, dtype=np.intp)
    mask = labels[anchors][:, None] == labels[None, :]
    mask[np.arange(len(anchors)), anchors] = False
    return mask
