"""Minimal reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray plus an optional backward rule linking it to its
parents. ``backward`` walks the graph once in reverse topological order and
accumulates gradients into every reachable node; traversal order is fixed by
construction order, so repeated passes over rebuilt graphs are bit-identical.

Only the operations the agent needs exist here, each with an exact gradient:
affine maps, ELU/ReLU/sigmoid/tanh, LayerNorm, softmax and log-softmax,
matrix products, slicing/concatenation, reductions, and a feature-wise max
whose subgradient flows to the lowest-index argmax row.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Dimension mismatch, tagged with the pipeline stage that raised it."""


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_rule")

    def __init__(self, data, parents=(), backward_rule=None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = tuple(parents)
        self.backward_rule = backward_rule

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.backward_rule is None

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, leaf={self.is_leaf})"


def tensor(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr)


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor, seed: np.ndarray | None = None) -> None:
    """Accumulate d(root)/d(node) into ``.grad`` of every reachable node."""
    order = _topo_order(root)
    for node in order:
        node.grad = None
    if seed is None:
        if root.data.ndim != 0:
            raise ShapeError("backward: non-scalar root requires an explicit seed")
        seed = np.ones_like(root.data)
    root.grad = np.asarray(seed, dtype=root.data.dtype)
    for node in reversed(order):
        if node.backward_rule is None or node.grad is None:
            continue
        for parent, grad in zip(node.parents, node.backward_rule(node.grad)):
            if grad is None:
                continue
            if parent.grad is None:
                parent.grad = grad.astype(parent.data.dtype, copy=True)
            else:
                parent.grad += grad.astype(parent.data.dtype, copy=False)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    def rule(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(a.data * b.data, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def scale(a: Tensor, s: float) -> Tensor:
    return Tensor(a.data * s, (a,), lambda g: (g * s,))


def matmul(a: Tensor, b: Tensor, tag: str = "matmul") -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"{tag}: cannot multiply {a.shape} @ {b.shape}")
    return Tensor(a.data @ b.data, (a, b),
                  lambda g: (g @ b.data.T, a.data.T @ g))


def affine(x: Tensor, w: Tensor, b: Tensor, tag: str = "affine") -> Tensor:
    if x.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"{tag}: input {x.shape} does not match weight {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"{tag}: bias {b.shape} does not match weight {w.shape}")

    def rule(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return Tensor(x.data @ w.data + b.data, (x, w, b), rule)


def elu(x: Tensor) -> Tensor:
    neg = np.exp(np.minimum(x.data, 0.0)) - 1.0
    out_data = np.where(x.data > 0, x.data, neg)

    def rule(g):
        return (np.where(x.data > 0, g, g * (neg + 1.0)),)

    return Tensor(out_data, (x,), rule)


def relu(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.data, 0.0), (x,),
                  lambda g: (np.where(x.data > 0, g, 0.0),))


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh_(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return Tensor(t, (x,), lambda g: (g * (1.0 - t * t),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5,
               tag: str = "layer_norm") -> Tensor:
    if x.data.ndim != 2 or gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(f"{tag}: input {x.shape} with gain {gain.shape}, bias {bias.shape}")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def rule(g):
        dxhat = g * gain.data
        # Standard LayerNorm backward over the normalized axis.
        dx = inv * (dxhat
                    - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return Tensor(xhat * gain.data + bias.data, (x, gain, bias), rule)


def softmax(x: Tensor, tag: str = "softmax") -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return ((g - dot) * s,)

    return Tensor(s, (x,), rule)


def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - log_z
    s = np.exp(out)

    def rule(g):
        return (g - s * g.sum(axis=-1, keepdims=True),)

    return Tensor(out, (x,), rule)


def max_over_rows(x: Tensor, tag: str = "max_pool") -> Tensor:
    """Column-wise max of a (rows, features) matrix.

    Subgradient flows only to the first (lowest-index) maximal row of each
    column, which keeps training reproducible under row permutations that
    leave the forward value unchanged.
    """
    if x.data.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"{tag}: need a non-empty 2-D input, got {x.shape}")
    idx = np.argmax(x.data, axis=0)

    def rule(g):
        dx = np.zeros_like(x.data)
        dx[idx, np.arange(x.shape[1])] = g
        return (dx,)

    return Tensor(x.data[idx, np.arange(x.shape[1])], (x,), rule)


def concat(parts: list[Tensor], axis: int = -1, tag: str = "concat") -> Tensor:
    datas = [p.data for p in parts]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate(datas, axis=axis), tuple(parts), rule)


def slice_axis(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def rule(g):
        dx = np.zeros_like(x.data)
        dx[index] = g
        return (dx,)

    return Tensor(x.data[index], (x,), rule)


def transpose2(x: Tensor) -> Tensor:
    return Tensor(x.data.T, (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.data.shape
    return Tensor(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def sum_all(x: Tensor) -> Tensor:
    return Tensor(x.data.sum(), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    return Tensor(x.data.mean(), (x,),
                  lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def sum_axis(x: Tensor, axis: int) -> Tensor:
    def rule(g):
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return Tensor(x.data.sum(axis=axis), (x,), rule)


def gather_rows(x: Tensor, idx: np.ndarray, tag: str = "gather") -> Tensor:
    """out[i] = x[i, idx[i]] for a 2-D input; used to pick log-probs."""
    if x.data.ndim != 2 or len(idx) != x.shape[0]:
        raise ShapeError(f"{tag}: input {x.shape} with {len(idx)} indices")
    rows = np.arange(x.shape[0])

    def rule(g):
        dx = np.zeros_like(x.data)
        dx[rows, idx] = g
        return (dx,)

    return Tensor(x.data[rows, idx], (x,), rule)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor, b: Tensor,
              tag: str = "lstm") -> tuple[Tensor, Tensor]:
    """One LSTM step; gate layout along the last axis is [i, f, g, o]."""
    hidden = h.shape[1]
    if wx.shape != (x.shape[1], 4 * hidden) or wh.shape != (hidden, 4 * hidden):
        raise ShapeError(
            f"{tag}: weights {wx.shape}/{wh.shape} do not fit input {x.shape}, "
            f"hidden {h.shape}"
        )
    z = add(affine(x, wx, b, tag=f"{tag}.x"), matmul(h, wh, tag=f"{tag}.h"))
    i = sigmoid(slice_axis(z, 0, hidden))
    f = sigmoid(slice_axis(z, hidden, 2 * hidden))
    g = tanh_(slice_axis(z, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_axis(z, 3 * hidden, 4 * hidden))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh_(c_next))
    return h_next, c_next


def global_norm(grads: list[np.ndarray]) -> float:
    total = 0.0
    for g in grads:
        total += float((g.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))
