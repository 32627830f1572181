"""Minimal reverse-mode autodiff over 2-D float64 arrays.

Each op records its parents and a closure mapping the upstream gradient to
each parent's gradient. ``backward`` runs one reverse topological sweep from a
scalar loss. Ops on tensors that do not require gradients skip recording, so
inference pays almost nothing beyond the numpy calls.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, StateError
from .kernel import sigmoid as _sigmoid


class Tensor:
    __slots__ = ("value", "grad", "parents", "requires_grad")

    def __init__(self, value, parents=(), requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        if self.value.ndim != 2:
            raise ShapeError(f"tape tensors are 2-D, got ndim={self.value.ndim}")
        self.grad = None
        self.parents = parents
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)

    @property
    def shape(self):
        return self.value.shape


def leaf(value) -> Tensor:
    """Trainable leaf; gradients accumulate into .grad after backward()."""
    return Tensor(value, requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape` (undoes numpy row/column broadcasting)."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != tuple(shape):
        raise ShapeError(f"cannot reduce gradient {g.shape} to {shape}")
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.value.shape} x {b.value.shape}")
    out = a.value @ b.value
    parents = []
    if a.requires_grad:
        parents.append((a, lambda g, bv=b.value: g @ bv.T))
    if b.requires_grad:
        parents.append((b, lambda g, av=a.value: av.T @ g))
    return Tensor(out, tuple(parents))


def _binary(a: Tensor, b: Tensor, out, da, db) -> Tensor:
    parents = []
    if a.requires_grad:
        parents.append((a, lambda g: _unbroadcast(da(g), a.value.shape)))
    if b.requires_grad:
        parents.append((b, lambda g: _unbroadcast(db(g), b.value.shape)))
    return Tensor(out, tuple(parents))


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.value + b.value, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.value - b.value, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def scale(a: Tensor, c: float) -> Tensor:
    parents = ((a, lambda g: g * c),) if a.requires_grad else ()
    return Tensor(a.value * c, parents)


def mul_const(a: Tensor, m: np.ndarray) -> Tensor:
    """Elementwise product with a non-differentiable array (dropout masks)."""
    parents = ((a, lambda g: _unbroadcast(g * m, a.value.shape)),) if a.requires_grad else ()
    return Tensor(a.value * m, parents)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    parents = ((a, lambda g: g * (1.0 - out * out)),) if a.requires_grad else ()
    return Tensor(out, parents)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.value)
    parents = ((a, lambda g: g * out * (1.0 - out)),) if a.requires_grad else ()
    return Tensor(out, parents)


def transpose(a: Tensor) -> Tensor:
    parents = ((a, lambda g: g.T),) if a.requires_grad else ()
    return Tensor(a.value.T, parents)


def hstack(tensors) -> Tensor:
    tensors = list(tensors)
    widths = [t.value.shape[1] for t in tensors]
    out = np.hstack([t.value for t in tensors])
    parents = []
    off = 0
    for t, w in zip(tensors, widths):
        if t.requires_grad:
            parents.append((t, lambda g, o=off, w=w: g[:, o : o + w]))
        off += w
    return Tensor(out, tuple(parents))


def col(a: Tensor, j: int) -> Tensor:
    out = a.value[:, j : j + 1]

    def back(g, j=j, shape=a.value.shape):
        full = np.zeros(shape)
        full[:, j : j + 1] = g
        return full

    parents = ((a, back),) if a.requires_grad else ()
    return Tensor(out, parents)


def add_n(tensors) -> Tensor:
    tensors = list(tensors)
    acc = tensors[0]
    for t in tensors[1:]:
        acc = add(acc, t)
    return acc


def sum_all(a: Tensor) -> Tensor:
    parents = ((a, lambda g: np.full(a.value.shape, g[0, 0])),) if a.requires_grad else ()
    return Tensor([[a.value.sum()]], parents)


def mean_all(a: Tensor) -> Tensor:
    n = a.value.size
    parents = ((a, lambda g: np.full(a.value.shape, g[0, 0] / n)),) if a.requires_grad else ()
    return Tensor([[a.value.mean()]], parents)


def row_softmax(a: Tensor) -> Tensor:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return out * (g - (g * out).sum(axis=1, keepdims=True))

    parents = ((a, back),) if a.requires_grad else ()
    return Tensor(out, parents)


def softmax_xent_mean(logits: Tensor, onehot: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Mean categorical cross-entropy over rows; returns (loss, probabilities).

    Fused for numerical stability; probabilities are detached from the tape.
    """
    if logits.value.shape != onehot.shape:
        raise ShapeError(f"labels shape {onehot.shape} != logits shape {logits.value.shape}")
    n = logits.value.shape[0]
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(shifted - logz)
    losses = -(onehot * (shifted - logz)).sum(axis=1)
    parents = ()
    if logits.requires_grad:
        parents = ((logits, lambda g: g[0, 0] * (probs - onehot) / n),)
    return Tensor([[losses.mean()]], parents), probs


def backward(loss: Tensor) -> None:
    """Reverse sweep seeding d(loss)/d(loss) = 1; accumulates into leaf .grad."""
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    if not loss.requires_grad:
        raise StateError("backward called with no recorded differentiable computation")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, back in node.parents:
            if not parent.requires_grad:
                continue
            pg = back(g)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
