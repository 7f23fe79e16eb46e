"""Source pre-training and source-free adaptation loops."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import banks as bank_ops
from .config import HyperParams, ModelSpec
from .data import Corpus
from .errors import ConfigError, DataError, DimensionError
from .losses import (LossBreakdown, ce_label_smoothing, div_loss, ncl_loss, objective,
                     scl_loss, total_loss)
from .model import EcanModel

log = logging.getLogger(__name__)

PRETRAIN_STREAM = 0
ADAPT_STREAM = 1


@dataclass
class SgdState:
    velocity: list
    lr: float
    momentum: float = 0.9

    @classmethod
    def for_params(cls, params, lr, momentum=0.9):
        return cls([np.zeros_like(p.data) for p in params], lr, momentum)


def sgd_step(params, state: SgdState) -> None:
    """Heavy-ball update ``v = mu*v + g; p -= lr*v``, then clear the gradients."""
    for p, v in zip(params, state.velocity):
        g = p.grad if p.grad is not None else 0.0
        v *= state.momentum
        v += g
        p.data -= state.lr * v
        p.grad = None


@dataclass
class EpochRecord:
    epoch: int
    losses: LossBreakdown
    uar: float | None = None
    seconds: float = 0.0

    def as_json(self):
        # wall-clock stays out of the file so logs are reproducible byte for byte
        return {"epoch": self.epoch, **self.losses.as_dict(), "uar": self.uar}


@dataclass
class RunLog:
    records: list = field(default_factory=list)

    def append(self, record: EpochRecord):
        expected = len(self.records) + 1
        if record.epoch != expected:
            raise ValueError(f"epoch {record.epoch} recorded out of order (expected {expected})")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return [getattr(r.losses, name) if name != "uar" else r.uar for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.as_json()) + "\n" for r in self.records)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


def epoch_order(n, seed, stream, epoch):
    return np.random.default_rng([seed, stream, epoch]).permutation(n)


def batches(order, batch_size):
    # the trailing short batch is kept so every bank row refreshes each epoch
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def pretrain(source: Corpus, spec: ModelSpec, hp: HyperParams, model: EcanModel | None = None) -> EcanModel:
    """Label-smoothed cross-entropy with momentum SGD on the labeled source corpus."""
    if not source.is_labeled:
        raise DataError("pre-training needs a fully labeled source corpus")
    if source.class_count != spec.class_count:
        raise ConfigError(f"source has {source.class_count} classes, model expects {spec.class_count}")
    if source.dim != spec.input_dim:
        raise DimensionError(f"source dim {source.dim} != model input_dim {spec.input_dim}")
    model = EcanModel.init(spec, hp.seed) if model is None else model.copy()
    params = model.parameters()
    state = SgdState.for_params(params, hp.lr_pretrain, hp.momentum)
    x, y = source.features, source.labels
    for epoch in range(1, hp.pretrain_epochs + 1):
        running = 0.0
        for idx in batches(epoch_order(len(x), hp.seed, PRETRAIN_STREAM, epoch), hp.batch_size):
            _, probs = model.forward(x[idx])
            loss = ce_label_smoothing(probs, y[idx], hp.label_smoothing)
            loss.backward()
            sgd_step(params, state)
            running += loss.item() * len(idx)
        log.debug("pretrain epoch %d ce=%.4f", epoch, running / len(x))
    return model


@dataclass
class BatchEvent:
    """Snapshot handed to the ``on_batch`` hook right after the bank refresh.

    ``model`` is the live model that produced ``features``/``probs``; it has
    not yet taken this batch's SGD step. Hooks must treat it as read-only.
    """

    epoch: int
    indices: np.ndarray
    features: np.ndarray
    probs: np.ndarray
    feature_bank: bank_ops.FeatureBank
    score_bank: bank_ops.ScoreBank
    model: EcanModel


def adapt(model: EcanModel, target: Corpus, hp: HyperParams, *, use_ncl=True, use_scl=True,
          use_div=True, monitor=None, on_batch=None):
    """Adapt a copy of ``model`` to the unlabeled ``target``; returns ``(model, RunLog)``.

    Per batch: forward, refresh both banks with the batch outputs, neighbour
    term from the feature bank, pseudo-label term from both banks, diversity
    term, one SGD step. Target labels are dropped before the loop starts.

    ``monitor(model) -> float`` is called after each epoch and its value is
    logged as the epoch UAR. ``on_batch(event)`` fires after each bank refresh.
    """
    if target.class_count != model.class_count:
        raise ConfigError(f"target has {target.class_count} classes, model expects {model.class_count}")
    if target.dim != model.input_dim:
        raise DimensionError(f"target dim {target.dim} != model input_dim {model.input_dim}")
    if len(target) < 2:
        raise ConfigError("adaptation needs at least two target samples")
    x = target.without_labels().features
    model = model.copy()
    params = model.parameters()
    state = SgdState.for_params(params, hp.lr_adapt, hp.momentum)
    lam = hp.lam if use_ncl else 0.0
    beta = hp.beta if use_scl else 0.0
    div_weight = 1.0 if use_div else 0.0
    feature_bank, score_bank = bank_ops.init_banks(model, x)
    run_log = RunLog()

    for epoch in range(1, hp.epochs + 1):
        started = time.perf_counter()
        sums = np.zeros(3)
        for idx in batches(epoch_order(len(x), hp.seed, ADAPT_STREAM, epoch), hp.batch_size):
            features, probs = model.forward(x[idx])
            bank_ops.update(feature_bank, score_bank, idx, features, probs)
            if on_batch is not None:
                on_batch(BatchEvent(epoch, idx, features.data, probs.data, feature_bank,
                                    score_bank, model))
            ncl = ncl_loss(features, idx, feature_bank, hp.tau, hp.k)
            scl = scl_loss(features, idx, feature_bank, score_bank, hp.tau)
            div = div_loss(probs)
            loss = objective(ncl, scl, div, lam, beta, div_weight)
            if loss.requires_grad:
                loss.backward()
            sgd_step(params, state)
            sums += len(idx) * np.array([ncl.item(), scl.item(), div.item()])
        ncl_m, scl_m, div_m = sums / len(x)
        breakdown = total_loss(ncl_m, scl_m, div_m, lam, beta, div_weight)
        uar = None if monitor is None else float(monitor(model))
        run_log.append(EpochRecord(epoch, breakdown, uar, time.perf_counter() - started))
        log.debug("adapt epoch %d %s uar=%s", epoch, breakdown.as_dict(), uar)
    return model, run_log
