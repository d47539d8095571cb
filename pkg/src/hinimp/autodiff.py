"""Dense f64 tensors with reverse-mode differentiation, plus Adam.

Only the operations the importance model needs are provided. Every op
computes its forward value eagerly with numpy and, when any input requires
a gradient, records a closure that maps the output gradient to input
gradients. ``backward`` walks the recorded graph in reverse topological
order, visiting each node once.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Tensor",
    "Adam",
    "ShapeError",
    "tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "tanh",
    "relu",
    "softmax",
    "concat",
    "gather",
    "take_rows",
    "segment_sum",
    "segment_softmax",
    "dot",
    "scale",
    "mean",
    "sum",
    "square",
    "reshape",
    "transpose",
    "slice_cols",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None, _op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._op = _op
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def _raise_not_scalar(t: Tensor):
    raise ShapeError(f"item() needs a single-element tensor, got shape {t.shape}")


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    # Constants never record a closure, so gradient-free subgraphs cost nothing.
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward_fn, _op=op)
    return Tensor(data, _op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _make(a.data * b.data, (a, b), bw, "mul")


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = _as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def square(a) -> Tensor:
    a = _as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def bw(g):
        A, B = a.data, b.data
        if a.ndim == 2 and b.ndim == 2:
            return (g @ B.T if a.requires_grad else None), (A.T @ g if b.requires_grad else None)
        if a.ndim == 2:  # (n,k) @ (k,)
            return np.outer(g, B), A.T @ g
        if b.ndim == 2:  # (k,) @ (k,m)
            return B @ g, np.outer(A, g)
        return g * B, g * A

    return _make(out, (a, b), bw, "matmul")


def dot(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: expected equal 1-d shapes, got {a.shape} and {b.shape}")
    return _make(np.dot(a.data, b.data), (a, b), lambda g: (g * b.data, g * a.data), "dot")


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d tensor, got {a.shape}")
    return _make(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


# ---------------------------------------------------------------- reductions

def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = _as_tensor(a)
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(out, (a,), bw, "sum")


def mean(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeError(f"mean: empty reduction over shape {a.shape}")
    return scale(sum(a, axis), 1.0 / n)


_INDEX_CACHE: dict[int, tuple] = {}
_INDEX_CACHE_SIZE = 512


def _index_info(rows: np.ndarray, n: int):
    """(is_unique, one-hot scatter matrix) for an index array, cached by identity.

    Index arrays of a model are reused every epoch; the cache keeps a
    reference to each array, so an id cannot be recycled while cached.
    """
    key = id(rows)
    hit = _INDEX_CACHE.get(key)
    if hit is not None and hit[0] is rows and hit[1] == n and hit[2] == len(rows):
        return hit[3], hit[4]
    unique = len(np.unique(rows)) == len(rows)
    onehot = None
    if not unique:
        onehot = sp.csr_matrix((np.ones(len(rows)), (rows, np.arange(len(rows)))), shape=(n, len(rows)))
    if len(_INDEX_CACHE) >= _INDEX_CACHE_SIZE:
        _INDEX_CACHE.pop(next(iter(_INDEX_CACHE)))
    _INDEX_CACHE[key] = (rows, n, len(rows), unique, onehot)
    return unique, onehot


def _scatter_rows(rows: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """``out[rows[i]] += values[i]`` (much faster than ``np.add.at`` for wide rows)."""
    unique, onehot = _index_info(rows, n)
    if unique:
        out = np.zeros((n,) + values.shape[1:])
        out[rows] = values
        return out
    if values.ndim == 1:
        return np.bincount(rows, weights=values, minlength=n).astype(np.float64)
    flat = values.reshape(len(rows), -1)
    return np.asarray(onehot @ flat).reshape((n,) + values.shape[1:])


# ---------------------------------------------------------------- softmax family

def softmax(a) -> Tensor:
    """Softmax over the last axis. ``-inf`` entries receive zero mass."""
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (a,), bw, "softmax")


def segment_sum(a, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets given by ``segments``."""
    a = _as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != a.shape[:1]:
        raise ShapeError(f"segment_sum: {segments.shape[0]} segment ids for {a.shape[0]} rows")
    out = _scatter_rows(segments, a.data, num_segments)
    return _make(out, (a,), lambda g: (g[segments],), "segment_sum")


def segment_softmax(a, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a 1-d score vector within each segment."""
    a = _as_tensor(a)
    if a.ndim != 1:
        raise ShapeError(f"segment_softmax: expected 1-d scores, got {a.shape}")
    segments = np.asarray(segments, dtype=np.int64)
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, segments, a.data)
    e = np.exp(a.data - seg_max[segments])
    denom = _scatter_rows(segments, e, num_segments)
    s = e / denom[segments]

    def bw(g):
        inner = _scatter_rows(segments, g * s, num_segments)
        return (s * (g - inner[segments]),)

    return _make(s, (a,), bw, "segment_softmax")


# ---------------------------------------------------------------- indexing

def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, bw, "concat")


def gather(a, indices: np.ndarray) -> Tensor:
    """Index along the last axis, row by row (``take_along_axis``).

    The index array is a constant of the forward pass; backward scatters
    upstream gradients back to the source positions, accumulating repeats.
    """
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if a.ndim == 1 and idx.ndim == 1:
        out = a.data[idx]

        def bw(g):
            return (np.bincount(idx, weights=g, minlength=a.shape[0]).astype(np.float64),)

        return _make(out, (a,), bw, "gather")
    if idx.ndim != a.ndim or idx.shape[:-1] != a.shape[:-1]:
        raise ShapeError(f"gather: index shape {idx.shape} does not match tensor shape {a.shape}")
    out = np.take_along_axis(a.data, idx, axis=-1)

    def bw_rows(g):
        flat = (idx + np.arange(a.shape[0])[:, None] * a.shape[-1]).ravel()
        return (np.bincount(flat, weights=g.ravel(), minlength=a.size).reshape(a.shape),)

    return _make(out, (a,), bw_rows, "gather")


def take_rows(a, rows: np.ndarray) -> Tensor:
    """Select rows along axis 0 (repeats allowed)."""
    a = _as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)

    def bw(g):
        return (_scatter_rows(rows, g, a.shape[0]),)

    return _make(a.data[rows], (a,), bw, "take_rows")


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2 or not 0 <= start <= stop <= a.shape[1]:
        raise ShapeError(f"slice_cols: bad slice [{start}:{stop}] for shape {a.shape}")

    def bw(g):
        grad = np.zeros(a.shape)
        grad[:, start:stop] = g
        return (grad,)

    return _make(a.data[:, start:stop], (a,), bw, "slice_cols")


# ---------------------------------------------------------------- backward

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf that requires a gradient."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise RuntimeError("backward was already called on this graph; rebuild the forward pass first")
    if not loss.requires_grad:
        raise RuntimeError("loss does not depend on any tensor that requires a gradient")
    loss._consumed = True
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------- optimizer

class Adam:
    """Bias-corrected Adam over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros(p.shape) for k, p in params.items()}
        self.v = {k: np.zeros(p.shape) for k, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros(p.shape)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict:
        return {"step": self.step_count, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int, name: str | None = None) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def zeros_param(shape: tuple, name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)
