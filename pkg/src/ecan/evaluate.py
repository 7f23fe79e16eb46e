"""UAR/confusion reports, a cluster-compactness score, and 2-D PCA export."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .data import Corpus
from .errors import ConfigError, NumericError, UsageError
from .grad import NORM_FLOOR

log = logging.getLogger(__name__)

POWER_ITERATIONS = 200


@dataclass
class EvalReport:
    uar: float
    per_class_recall: list
    confusion: list
    accuracy: float
    cluster_quality: float | None = None

    def to_dict(self):
        return {"uar": self.uar, "accuracy": self.accuracy,
                "per_class_recall": self.per_class_recall, "confusion": self.confusion,
                "cluster_quality": self.cluster_quality}

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def confusion_matrix(y_true, y_pred, class_count):
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def report_from_predictions(y_true, y_pred, class_count) -> EvalReport:
    """Classes that never occur in ``y_true`` are left out of the UAR mean (recall reported as NaN)."""
    cm = confusion_matrix(y_true, y_pred, class_count)
    support = cm.sum(axis=1)
    present = support > 0
    recall = np.full(class_count, np.nan)
    recall[present] = np.diag(cm)[present] / support[present]
    uar = float(recall[present].mean()) if present.any() else 0.0
    accuracy = float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0
    return EvalReport(uar, [None if np.isnan(r) else float(r) for r in recall], cm.tolist(), accuracy)


def uar(y_true, y_pred, class_count) -> float:
    return report_from_predictions(y_true, y_pred, class_count).uar


def predict(model, x, batch_size=512):
    x = np.asarray(x, dtype=np.float64)
    feats, probs = [], []
    for start in range(0, len(x), batch_size):
        f, p = model.forward(x[start:start + batch_size])
        feats.append(f.data)
        probs.append(p.data)
    if not feats:
        return np.zeros((0, model.feature_dim)), np.zeros((0, model.class_count))
    return np.vstack(feats), np.vstack(probs)


def evaluate(model, corpus: Corpus) -> EvalReport:
    if not corpus.is_labeled:
        raise UsageError(f"corpus {corpus.name!r} has no labels to evaluate against")
    if corpus.class_count != model.class_count:
        raise ConfigError(f"corpus has {corpus.class_count} classes, model expects {model.class_count}")
    features, probs = predict(model, corpus.features)
    report = report_from_predictions(corpus.labels, np.argmax(probs, axis=1), corpus.class_count)
    try:
        report.cluster_quality = cluster_quality(features, corpus.labels)
    except (NumericError, UsageError) as exc:
        # the compactness score is auxiliary; a degenerate case must not sink the UAR report
        log.warning("cluster quality undefined: %s", exc)
    return report


def cluster_quality(features, labels) -> float:
    """Mean cosine between same-class pairs minus mean cosine between different-class pairs.

    Self-pairs are excluded. Larger means tighter, better separated clusters.
    """
    f = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    if np.any(norms < NORM_FLOOR):
        raise NumericError("zero feature row in cluster_quality")
    z = f / norms
    cos = z @ z.T
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    intra = same & off_diag
    inter = ~same
    if not intra.any() or not inter.any():
        raise UsageError("cluster_quality needs at least one same-class and one cross-class pair")
    return float(cos[intra].mean() - cos[inter].mean())


def _power_iteration(cov, start, orthogonal_to=None, iterations=POWER_ITERATIONS):
    v = start / np.linalg.norm(start)
    for _ in range(iterations):
        if orthogonal_to is not None:
            v = v - orthogonal_to * (orthogonal_to @ v)
        w = cov @ v
        if orthogonal_to is not None:
            w = w - orthogonal_to * (orthogonal_to @ w)
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            break
        v = w / norm
    if orthogonal_to is not None:
        v = v - orthogonal_to * (orthogonal_to @ v)
        v = v / np.linalg.norm(v)
    return v, float(v @ cov @ v)


def _fix_sign(v):
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if nz.size and v[nz[0]] < 0 else v


def principal_directions(x):
    """Top-2 principal directions of the rows of ``x`` via power iteration with deflation."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise UsageError("need at least two feature columns")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(len(x) - 1, 1)
    if np.trace(cov) <= NORM_FLOOR:
        raise NumericError("features have zero variance; no principal direction exists")
    start = np.random.default_rng(0).standard_normal(cov.shape[0])
    v1, lam1 = _power_iteration(cov, start)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2, _ = _power_iteration(deflated, np.random.default_rng(1).standard_normal(cov.shape[0]), v1)
    return np.stack([_fix_sign(v1), _fix_sign(v2)]), centered


def project_2d(model, corpus: Corpus) -> np.ndarray:
    """``N x 3`` table of ``(x, y, label)`` from the model's target features."""
    if len(corpus) < 3:
        raise UsageError("projection needs at least three samples")
    features, _ = predict(model, corpus.features)
    return project_features(features, corpus.labels)


def project_features(features, labels) -> np.ndarray:
    directions, centered = principal_directions(features)
    coords = centered @ directions.T
    return np.column_stack([coords, np.asarray(labels, dtype=np.float64)])


def write_projection(table, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "label"])
        for x, y, label in table:
            writer.writerow([repr(float(x)), repr(float(y)), int(label)])
