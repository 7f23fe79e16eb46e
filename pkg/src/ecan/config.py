"""Hyperparameters and model layout."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .errors import ConfigError


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden: tuple = (64,)
    feature_dim: int = 32
    class_count: int = 4

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        widths = (self.input_dim, *self.hidden, self.feature_dim, self.class_count)
        if any(int(w) != w or w <= 0 for w in widths):
            raise ConfigError(f"layer widths must be positive integers, got {widths}")

    @property
    def widths(self):
        """Extractor widths, input first, feature dimension last."""
        return (self.input_dim, *self.hidden, self.feature_dim)


@dataclass(frozen=True)
class HyperParams:
    """Training knobs for pre-training and adaptation.

    ``tau`` is the contrastive temperature shared by both contrastive terms;
    ``lam`` and ``beta`` weight the neighbour and pseudo-label terms.
    """

    tau: float = 0.05
    k: int = 1
    lam: float = 0.5
    beta: float = 0.1
    batch_size: int = 32
    epochs: int = 4
    pretrain_epochs: int = 100
    lr_pretrain: float = 0.01
    lr_adapt: float = 0.001
    momentum: float = 0.9
    label_smoothing: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.k < 1:
            raise ConfigError(f"k must be at least 1, got {self.k}")
        if self.lam < 0 or self.beta < 0:
            raise ConfigError("lambda and beta must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.lr_pretrain < 0 or self.lr_adapt < 0:
            raise ConfigError("learning rates must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not 0 <= self.label_smoothing < 1:
            raise ConfigError("label_smoothing must lie in [0, 1)")

    def replace(self, **changes):
        return HyperParams(**{**asdict(self), **changes})


HYPERPARAM_FIELDS = tuple(f.name for f in fields(HyperParams))

