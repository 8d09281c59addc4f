"""Dense float32 tensors with reverse-mode automatic differentiation.

Every operation builds a define-by-run graph; ``backward`` walks it in
reverse topological order and accumulates gradients into ``Tensor.grad``
until ``zero_grad`` is called. All buffers are contiguous row-major
float32 and every forward op validates that its output is finite.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf from finite inputs."""


def _as_f32(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    return np.ascontiguousarray(arr)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """A dense float32 array plus an optional gradient buffer.

    ``requires_grad`` marks leaves that should receive gradients;
    interior nodes inherit it from their parents. ``grad`` is allocated
    lazily on first accumulation and always matches ``data``'s shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, values, requires_grad: bool = False):
        self.data = _as_f32(values)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backprop = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; constants are wrapped as non-grad tensors.
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backprop, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data.astype(np.float32, copy=False)
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backprop = backprop
    else:
        out._parents = ()
        out._backprop = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.astype(np.float32, copy=False)


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _node(data, (a, b), backprop, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _node(data, (a, b), backprop, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backprop, "mul")


def neg(a: Tensor) -> Tensor:
    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(-g)

    return _node(-a.data, (a,), backprop, "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. 2-D, or batched with identical leading dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs at least 2-D operands")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dims differ: {a.shape} x {b.shape}")
    data = a.data @ b.data

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.swapaxes(-1, -2))
        if b.requires_grad:
            b.accumulate_grad(a.data.swapaxes(-1, -2) @ g)

    return _node(data, (a, b), backprop, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` with gradients to all three operands."""
    return add(matmul(x, w), b)


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    data = np.ascontiguousarray(a.data.transpose(axes))

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(g.transpose(inverse))

    return _node(data, (a,), backprop, "transpose")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.shape))

    return _node(data, (a,), backprop, "reshape")


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backprop(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p.accumulate_grad(g[tuple(idx)])

    return _node(data, tuple(parts), backprop, "concat")


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, np.float32(0.0))

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0))

    return _node(data, (a,), backprop, "relu")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Normalize along ``axis`` with max-subtraction for stability."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backprop(g):
        if a.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            a.accumulate_grad(data * (g - inner))

    return _node(data, (a,), backprop, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis: gamma * (x - mu) / sqrt(var + eps) + beta."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = xc * inv
    data = gamma.data * xhat + beta.data

    def backprop(g):
        if gamma.requires_grad:
            gamma.accumulate_grad(_unbroadcast(g * xhat, gamma.shape))
        if beta.requires_grad:
            beta.accumulate_grad(_unbroadcast(g, beta.shape))
        if x.requires_grad:
            gh = g * gamma.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(inv * (gh - m1 - xhat * m2))

    return _node(data, (x, gamma, beta), backprop, "layer_norm")


def sum_all(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum(dtype=np.float32))

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g, a.shape).astype(np.float32))

    return _node(data, (a,), backprop, "sum")


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.asarray(a.data.mean(dtype=np.float32))

    def backprop(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g / n, a.shape).astype(np.float32))

    return _node(data, (a,), backprop, "mean")


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable requires_grad tensor.

    ``loss`` must be scalar. Calling twice without ``zero_grad`` adds the
    two gradient fields together.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backprop is not None and node.grad is not None:
            node._backprop(node.grad)
    # Interior activations are one-shot; drop their grads so only leaves keep state.
    for node in order:
        if node._backprop is not None:
            node.grad = None


def causal_mask(n: int) -> np.ndarray:
    """Additive mask: 0 at or below the diagonal, -1e9 above it.

    -1e9 stays finite in f32 while exp(-1e9 - max) underflows to exactly
    zero, so masked positions contribute nothing, bit for bit.
    """
    mask = np.zeros((n, n), dtype=np.float32)
    mask[np.triu_indices(n, k=1)] = np.float32(-1e9)
    return mask


def scaled_scores(q: Tensor, k_t: Tensor, head_dim: int) -> Tensor:
    return mul(matmul(q, k_t), Tensor(np.float32(1.0 / math.sqrt(head_dim))))
