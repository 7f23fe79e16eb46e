"""Minimal reverse-mode differentiation over dense float64 arrays.

Only the operations the model and the adaptation losses need are provided.
Every tensor produced by an op remembers its parents and a closure mapping
the output gradient to parent gradients; :meth:`Tensor.backward` replays
those closures in reverse execution order.

Gradients of leaf tensors are *accumulated* into ``.grad``; callers zero
them between optimisation steps.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateFeatureError, DimensionError, NumericError

NORM_FLOOR = 1e-12


class Tensor:
    """A float64 array with an optional gradient.

    >>> x = Tensor([[1.0, 2.0]], requires_grad=True)
    >>> (x * x).sum().backward()
    >>> x.grad
    array([[2., 4.]])
    """

    def __init__(self, data, requires_grad=False, *, _parents=(), _backward=None, _op=""):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(_parents)
        self._backward = _backward
        self._op = _op

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag}, op={self._op or 'leaf'!r})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None if self.grad is None else np.zeros_like(self.data)

    def backward(self, grad=None):
        """Backpropagate from this tensor, accumulating into leaf ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed needs a single-element tensor")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise DimensionError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")
        Tape(self).run(grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self, floor=None):
        return log(self, floor)


class Tape:
    """The operations reachable from an output, in execution order.

    Each node appears once; :meth:`run` visits them back to front.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes = []
        seen = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def run(self, seed):
        grads = {id(self.output): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward, op):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op} produced non-finite values")
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=parents, _backward=backward, _op=op)
    return Tensor(data, _op=op)


def _broadcast_ok(big, small):
    if big == small or small == ():
        return True
    if len(big) == 2 and small in ((big[1],), (1, big[1])):
        return True
    return False


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    if len(shape) == 1:
        return grad.sum(axis=0)
    return grad.sum(axis=0, keepdims=True)


def _check_pair(a, b, op):
    if _broadcast_ok(a.shape, b.shape) or _broadcast_ok(b.shape, a.shape):
        return
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# -- elementwise ---------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_pair(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_pair(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def neg(a):
    return scale(a, -1.0)


def scale(a, c: float):
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,), "scale")


def relu(a):
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a, floor=None):
    """Natural log; with ``floor`` the input is clamped from below first.

    Clamped entries get zero gradient.
    """
    x = a.data
    if floor is not None:
        live = x > floor
        x = np.where(live, x, floor)
    else:
        if np.any(x <= 0):
            raise NumericError("log of non-positive value")
        live = None

    def backward(g):
        d = g / x
        return (d if live is None else d * live,)

    return _result(np.log(x), (a,), backward, "log")


# -- shape / reductions ----------------------------------------------------


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a):
    if a.ndim != 2:
        raise DimensionError("transpose expects a matrix")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def sum_(a, axis=None):
    if axis is None:
        return _result(np.asarray(a.data.sum()), (a,),
                       lambda g: (np.broadcast_to(g, a.shape).copy(),), "sum")
    out = a.data.sum(axis=axis)
    return _result(out, (a,),
                   lambda g: (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),), "sum")


def mean(a, axis=None):
    count = a.data.size if axis is None else a.shape[axis]
    if count == 0:
        raise DimensionError("mean over an empty axis")
    return scale(sum_(a, axis), 1.0 / count)


def gather_rows(a, index):
    index = np.asarray(index, dtype=np.intp)
    if a.ndim != 2:
        raise DimensionError("gather_rows expects a matrix")
    if index.size and (index.min() < -len(a) or index.max() >= len(a)):
        raise IndexError(f"row index out of range for {len(a)} rows")

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return _result(a.data[index], (a,), backward, "gather_rows")


# -- fused row-wise ops ----------------------------------------------------


def softmax_rows(x):
    if x.ndim != 2:
        raise DimensionError("softmax_rows expects a matrix")
    z = x.data - x.data.max(axis=1, keepdims=True) if x.shape[0] else x.data.copy()
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _result(s, (x,), backward, "softmax_rows")


def normalize_rows(rows: np.ndarray):
    """Plain-array row normalization; returns ``(unit_rows, norms)``."""
    norms = np.sqrt((rows * rows).sum(axis=1, keepdims=True))
    if np.any(norms < NORM_FLOOR):
        bad = int(np.argmax(norms.ravel() < NORM_FLOOR))
        raise DegenerateFeatureError(f"row {bad} has norm below {NORM_FLOOR:g}")
    return rows / norms, norms


def l2_normalize_rows(x):
    if x.ndim != 2:
        raise DimensionError("l2_normalize_rows expects a matrix")
    y, norms = normalize_rows(x.data)

    def backward(g):
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)

    return _result(y, (x,), backward, "l2_normalize_rows")


def logsumexp_rows(x, mask=None):
    """``log(sum_j mask_ij * exp(x_ij))`` per row, shifted by the row max.

    ``mask`` is a constant 0/1 array; every row must keep at least one entry.
    """
    if x.ndim != 2:
        raise DimensionError("logsumexp_rows expects a matrix")
    m = np.ones_like(x.data, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != x.shape:
        raise DimensionError(f"mask shape {m.shape} != input shape {x.shape}")
    if x.shape[0] and not m.any(axis=1).all():
        raise DimensionError("logsumexp_rows: a row has no unmasked entries")
    masked = np.where(m, x.data, -np.inf)
    top = masked.max(axis=1, keepdims=True) if x.shape[0] else np.zeros((0, 1))
    e = np.where(m, np.exp(masked - top), 0.0)
    total = e.sum(axis=1, keepdims=True)
    out = (np.log(total) + top).ravel()
    w = e / total

    def backward(g):
        return (w * g[:, None],)

    return _result(out, (x,), backward, "logsumexp_rows")


def as_tensor(x, requires_grad=False):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad)


def finite_difference_grad(fn, x: np.ndarray, step=1e-5):
    """Central-difference gradient of scalar ``fn`` at ``x`` (used as a test oracle)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(x)
        flat[i] = orig - step
        down = fn(x)
        flat[i] = orig
        gf[i] = (up - down) / (2 * step)
    return g


def max_relative_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


__all__ = [
    "Tensor", "Tape", "add", "mul", "neg", "scale", "relu", "exp", "log", "matmul",
    "transpose", "sum_", "mean", "gather_rows", "softmax_rows", "l2_normalize_rows",
    "logsumexp_rows", "normalize_rows", "as_tensor", "finite_difference_grad", "max_relative_error",
]
