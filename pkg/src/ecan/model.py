"""MLP feature extractor plus linear softmax classifier."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ModelSpec
from .errors import DimensionError, FormatError
from .grad import Tensor, as_tensor, matmul, relu, softmax_rows

FORMAT_TAG = "ecan-model"
FORMAT_VERSION = 1


def _glorot(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class EcanModel:
    """``features = extractor(x)``, ``probs = softmax(features @ W + b)``.

    Hidden extractor layers use ReLU; the last extractor layer is linear so
    feature rows are not clipped to the positive orthant.
    """

    def __init__(self, spec: ModelSpec, layers, classifier):
        self.spec = spec
        self.layers = [(as_tensor(w, True), as_tensor(b, True)) for w, b in layers]
        w, b = classifier
        self.classifier = (as_tensor(w, True), as_tensor(b, True))
        self._check_shapes()

    @classmethod
    def init(cls, spec: ModelSpec, seed: int) -> "EcanModel":
        rng = np.random.default_rng(seed)
        widths = spec.widths
        layers = [(_glorot(rng, i, o), np.zeros(o)) for i, o in zip(widths[:-1], widths[1:])]
        head = (_glorot(rng, spec.feature_dim, spec.class_count), np.zeros(spec.class_count))
        return cls(spec, layers, head)

    def _check_shapes(self):
        widths = self.spec.widths
        if len(self.layers) != len(widths) - 1:
            raise DimensionError(f"expected {len(widths) - 1} extractor layers, got {len(self.layers)}")
        for (w, b), i, o in zip(self.layers, widths[:-1], widths[1:]):
            if w.shape != (i, o) or b.shape != (o,):
                raise DimensionError(f"layer shapes {w.shape}/{b.shape} do not match widths {i}->{o}")
        w, b = self.classifier
        d, c = self.spec.feature_dim, self.spec.class_count
        if w.shape != (d, c) or b.shape != (c,):
            raise DimensionError(f"classifier shapes {w.shape}/{b.shape} do not match {d}->{c}")

    @property
    def input_dim(self):
        return self.spec.input_dim

    @property
    def feature_dim(self):
        return self.spec.feature_dim

    @property
    def class_count(self):
        return self.spec.class_count

    def parameters(self):
        params = [p for layer in self.layers for p in layer]
        return params + list(self.classifier)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def extract(self, x) -> Tensor:
        h = as_tensor(x)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise DimensionError(f"batch shape {h.shape} does not match input_dim {self.input_dim}")
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = matmul(h, w) + b
            if i < last:
                h = relu(h)
        return h

    def logits(self, features: Tensor) -> Tensor:
        w, b = self.classifier
        return matmul(features, w) + b

    def forward(self, x):
        """Return ``(features, probs)`` for a batch of shape ``n x input_dim``."""
        features = self.extract(x)
        return features, softmax_rows(self.logits(features))

    __call__ = forward

    def predict_proba(self, x) -> np.ndarray:
        return self.forward(x)[1].data

    def copy(self) -> "EcanModel":
        return EcanModel(
            self.spec,
            [(w.data.copy(), b.data.copy()) for w, b in self.layers],
            (self.classifier[0].data.copy(), self.classifier[1].data.copy()),
        )

    def state(self):
        return [p.data for p in self.parameters()]

    # -- persistence -------------------------------------------------------

    def to_dict(self):
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "input_dim": self.spec.input_dim,
            "hidden": list(self.spec.hidden),
            "feature_dim": self.spec.feature_dim,
            "class_count": self.spec.class_count,
            "extractor": [{"weight": w.data.tolist(), "bias": b.data.tolist()} for w, b in self.layers],
            "classifier": {"weight": self.classifier[0].data.tolist(),
                           "bias": self.classifier[1].data.tolist()},
        }

    @classmethod
    def from_dict(cls, doc) -> "EcanModel":
        if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
            raise FormatError("not an ecan model file", "format")
        if doc.get("version") != FORMAT_VERSION:
            raise FormatError(f"unsupported model version {doc.get('version')!r}", "version")
        try:
            spec = ModelSpec(doc["input_dim"], tuple(doc["hidden"]), doc["feature_dim"], doc["class_count"])
            layers = [(_array(l["weight"], "extractor.weight"), _array(l["bias"], "extractor.bias"))
                      for l in doc["extractor"]]
            head = (_array(doc["classifier"]["weight"], "classifier.weight"),
                    _array(doc["classifier"]["bias"], "classifier.bias"))
        except KeyError as exc:
            raise FormatError(f"missing field {exc.args[0]!r}", exc.args[0]) from None
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad header value: {exc}") from None
        try:
            return cls(spec, layers, head)
        except DimensionError as exc:
            raise FormatError(str(exc), "shapes") from None


def _array(values, where):
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError):
        raise FormatError("parameter array is ragged or non-numeric", where) from None
    if not np.all(np.isfinite(arr)):
        raise FormatError("parameter array has non-finite values", where)
    return arr


def save(model: EcanModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n", encoding="utf-8")


def load(path) -> EcanModel:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed model file: {exc.msg}", exc.pos) from None
    return EcanModel.from_dict(doc)
