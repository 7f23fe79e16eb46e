"""Corpora, their CSV/manifest file format, and a synthetic domain-shift generator."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError

UNLABELED = -1


@dataclass
class Corpus:
    """``N x dim`` feature matrix with integer labels (``-1`` = unknown)."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "corpus"

    def __post_init__(self):
        self.features = np.array(self.features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) == 0:
            raise DataError("a corpus needs at least one sample row")
        if self.labels is None:
            self.labels = np.full(len(self.features), UNLABELED)
        self.labels = np.array(self.labels, dtype=np.int64)
        if self.labels.shape != (len(self.features),):
            raise DataError("one label per sample is required")
        if self.class_count < 1:
            raise DataError("class_count must be positive")
        if np.any(self.labels < UNLABELED) or np.any(self.labels >= self.class_count):
            raise DataError(f"labels must lie in [0, {self.class_count}) or be {UNLABELED}")

    def __len__(self):
        return len(self.features)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def is_labeled(self):
        return bool(np.all(self.labels >= 0))

    def without_labels(self) -> "Corpus":
        return Corpus(self.features.copy(), None, self.class_count, self.name)

    def class_counts(self):
        return np.bincount(self.labels[self.labels >= 0], minlength=self.class_count)


@dataclass(frozen=True)
class ShiftSpec:
    """Source/target Gaussian-cluster task.

    Class means sit on the unit circle spanned by the first two axes. The
    target draws from the same clusters, then rotates those two axes by
    ``rotation``, scales by ``scale``, translates, and adds ``noise_sigma``
    isotropic noise. ``class_imbalance`` multiplies the per-class target counts.
    """

    class_count: int = 4
    dim: int = 16
    samples_per_class: int = 150
    rotation: float = math.pi / 6
    translation: object = 0.5
    scale: float = 1.2
    noise_sigma: float = 0.1
    class_imbalance: tuple | None = None
    cluster_std: float = 0.3
    seed: int = 0

    def validate(self):
        if self.class_count < 2:
            raise ConfigError("at least two classes are required")
        if self.dim < 2:
            raise ConfigError("dim must be at least 2")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be positive")
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if self.noise_sigma < 0 or self.cluster_std < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.class_imbalance is not None:
            if len(self.class_imbalance) != self.class_count:
                raise ConfigError("class_imbalance needs one multiplier per class")
            if any(m <= 0 for m in self.class_imbalance):
                raise ConfigError("class_imbalance multipliers must be positive")
        self.translation_vector()

    def translation_vector(self):
        try:
            return np.broadcast_to(np.asarray(self.translation, dtype=np.float64), (self.dim,)).copy()
        except ValueError:
            raise ConfigError(f"translation must be a scalar or length-{self.dim} vector") from None

    def target_counts(self):
        if self.class_imbalance is None:
            return [self.samples_per_class] * self.class_count
        return [max(1, int(round(self.samples_per_class * m))) for m in self.class_imbalance]


def class_means(class_count, dim):
    angles = 2 * np.pi * np.arange(class_count) / class_count
    means = np.zeros((class_count, dim))
    means[:, 0] = np.cos(angles)
    means[:, 1] = np.sin(angles)
    return means


def _draw(rng, means, counts, std):
    labels = np.repeat(np.arange(len(means)), counts)
    x = means[labels] + std * rng.standard_normal((len(labels), means.shape[1]))
    order = rng.permutation(len(labels))
    return x[order], labels[order]


def shift_transform(x, spec: ShiftSpec, rng=None):
    c, s = math.cos(spec.rotation), math.sin(spec.rotation)
    out = x.copy()
    out[:, 0] = c * x[:, 0] - s * x[:, 1]
    out[:, 1] = s * x[:, 0] + c * x[:, 1]
    out = out * spec.scale + spec.translation_vector()
    if rng is not None and spec.noise_sigma > 0:
        out = out + spec.noise_sigma * rng.standard_normal(out.shape)
    return out


def generate_pair(spec: ShiftSpec):
    """Return ``(source, target)`` corpora; target labels are kept for evaluation only."""
    spec.validate()
    means = class_means(spec.class_count, spec.dim)
    src_rng = np.random.default_rng([spec.seed, 0])
    tgt_rng = np.random.default_rng([spec.seed, 1])
    xs, ys = _draw(src_rng, means, [spec.samples_per_class] * spec.class_count, spec.cluster_std)
    xt, yt = _draw(tgt_rng, means, spec.target_counts(), spec.cluster_std)
    xt = shift_transform(xt, spec, tgt_rng)
    return (Corpus(xs, ys, spec.class_count, "source"),
            Corpus(xt, yt, spec.class_count, "target"))


# -- file format -------------------------------------------------------------


def manifest_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_corpus(corpus: Corpus, path) -> None:
    if corpus.features.size == 0:
        raise DataError("refusing to save a corpus without features")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"f{j}" for j in range(corpus.dim)])
        for label, row in zip(corpus.labels, corpus.features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])
    manifest = {"name": corpus.name, "C": corpus.class_count, "dim": corpus.dim, "N": len(corpus)}
    manifest_path(path).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def _read_manifest(path):
    mpath = manifest_path(path)
    if not mpath.exists():
        return None
    try:
        doc = json.loads(mpath.read_text(encoding="utf-8"))
        return {"name": str(doc.get("name", Path(path).stem)), "C": int(doc["C"]),
                "dim": int(doc["dim"]), "N": int(doc["N"])}
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed manifest {mpath}: {exc.msg}", exc.pos) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"manifest {mpath} is missing or has a bad field: {exc}") from None


def load_corpus(path, class_count=None) -> Corpus:
    """Parse a corpus CSV; ``class_count`` falls back to the manifest, then to the labels."""
    path = Path(path)
    manifest = _read_manifest(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path} is empty", 1)
    header = rows[0]
    expected = ["label"] + [f"f{j}" for j in range(len(header) - 1)]
    if header != expected or len(header) < 2:
        raise FormatError("header must read label,f0,f1,...", 1)
    width = len(header)
    labels, feats = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise FormatError(f"expected {width} cells, found {len(row)}", lineno)
        try:
            labels.append(int(row[0]))
            values = [float(v) for v in row[1:]]
        except ValueError:
            raise FormatError("non-numeric cell", lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise FormatError("non-finite feature value", lineno)
        feats.append(values)
    if not feats:
        raise FormatError(f"{path} has no sample rows", 2)

    if class_count is None and manifest is not None:
        class_count = manifest["C"]
    if class_count is None:
        class_count = max(2, max(labels) + 1)
    for lineno, label in enumerate(labels, start=2):
        if label < UNLABELED or label >= class_count:
            raise FormatError(f"label {label} outside [0, {class_count}) and not {UNLABELED}", lineno)
    if manifest is not None and (manifest["dim"] != width - 1 or manifest["N"] != len(feats)):
        raise FormatError(f"manifest says N={manifest['N']}, dim={manifest['dim']} but file has "
                          f"N={len(feats)}, dim={width - 1}")
    name = manifest["name"] if manifest else path.stem
    return Corpus(np.array(feats), np.array(labels), class_count, name)

