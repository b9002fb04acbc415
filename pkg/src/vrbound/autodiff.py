"""Minimal reverse-mode differentiation over numpy arrays.

A fixed, small set of operations is enough for every gradient this package
needs: affine maps, ReLU/tanh/sigmoid nonlinearities, Gaussian log densities,
Bernoulli log masses, log-sum-exp, reshapes and 1-D slices. Graphs are built
functionally (fresh leaf nodes per evaluation), a single backward pass
accumulates vector-Jacobian products in topological order, and broadcasting
is undone by summing over the broadcast axes. There is deliberately no
general graph compiler, no in-place mutation, and no higher-order support.

Typical use::

    mu = Node(np.zeros(3))
    theta = mu + as_node(eps) * np.exp(-1.0)
    loss = vsum(theta * theta) * 0.5
    grads = gradients(loss, {"mu": mu})
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Node",
    "as_node",
    "backward",
    "bernoulli_logpmf_rows",
    "clip",
    "exp",
    "gradients",
    "log",
    "logsumexp_node",
    "matmul",
    "normal_logpdf_rows",
    "normal_logpdf_sum",
    "relu",
    "reshape",
    "sigmoid",
    "slice1d",
    "tanh",
    "vmean",
    "vsum",
]

_LOG_2PI = math.log(2.0 * math.pi)


class Node:
    """A value in the computation graph; leaves carry the parameters."""

    __slots__ = ("value", "parents", "grad")

    # Make numpy defer to the reflected operators instead of coercing a Node
    # into an object array.
    __array_ufunc__ = None

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.grad = None

    # arithmetic sugar; plain numbers/arrays are treated as constants
    def __add__(self, other):
        return add(self, as_node(other))

    def __radd__(self, other):
        return add(as_node(other), self)

    def __sub__(self, other):
        return sub(self, as_node(other))

    def __rsub__(self, other):
        return sub(as_node(other), self)

    def __mul__(self, other):
        return mul(self, as_node(other))

    def __rmul__(self, other):
        return mul(as_node(other), self)

    def __truediv__(self, other):
        return div(self, as_node(other))

    def __rtruediv__(self, other):
        return div(as_node(other), self)

    def __neg__(self):
        return mul(self, as_node(-1.0))

    def __matmul__(self, other):
        return matmul(self, as_node(other))

    def __repr__(self) -> str:  # pragma: no cover
        return f"Node(shape={self.value.shape})"


def as_node(x) -> Node:
    """Wrap a constant; Nodes pass through unchanged."""
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    grad = np.asarray(grad, dtype=float)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ----------------------------------------------------------------------
# primitive operations


def add(a: Node, b: Node) -> Node:
    return Node(
        a.value + b.value,
        (
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ),
    )


def sub(a: Node, b: Node) -> Node:
    return Node(
        a.value - b.value,
        (
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(-g, b.value.shape)),
        ),
    )


def mul(a: Node, b: Node) -> Node:
    return Node(
        a.value * b.value,
        (
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ),
    )


def div(a: Node, b: Node) -> Node:
    return Node(
        a.value / b.value,
        (
            (a, lambda g: _unbroadcast(g / b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(-g * a.value / b.value**2, b.value.shape)),
        ),
    )


def matmul(a: Node, b: Node) -> Node:
    va, vb = a.value, b.value
    out = va @ vb
    if va.ndim == 1 and vb.ndim == 1:
        parents = ((a, lambda g: g * vb), (b, lambda g: g * va))
    elif va.ndim == 2 and vb.ndim == 1:
        parents = ((a, lambda g: np.outer(g, vb)), (b, lambda g: va.T @ g))
    elif va.ndim == 1 and vb.ndim == 2:
        parents = ((a, lambda g: vb @ g), (b, lambda g: np.outer(va, g)))
    elif va.ndim == 2 and vb.ndim == 2:
        parents = ((a, lambda g: g @ vb.T), (b, lambda g: va.T @ g))
    else:
        raise ValueError(f"matmul supports 1-D/2-D operands, got {va.ndim}-D @ {vb.ndim}-D")
    return Node(out, parents)


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return Node(out, ((a, lambda g: g * out),))


def log(a: Node) -> Node:
    return Node(np.log(a.value), ((a, lambda g: g / a.value),))


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)
    return Node(out, ((a, lambda g: g * (1.0 - out * out)),))


def relu(a: Node) -> Node:
    mask = a.value > 0.0
    return Node(np.where(mask, a.value, 0.0), ((a, lambda g: g * mask),))


def sigmoid(a: Node) -> Node:
    # Stable on both tails.
    v = a.value
    out = np.where(v >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return Node(out, ((a, lambda g: g * out * (1.0 - out)),))


def clip(a: Node, lo: float, hi: float) -> Node:
    mask = (a.value > lo) & (a.value < hi)
    return Node(np.clip(a.value, lo, hi), ((a, lambda g: g * mask),))


def vsum(a: Node, axis: int | None = None) -> Node:
    out = np.sum(a.value, axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.value.shape).astype(float)
        return np.broadcast_to(np.expand_dims(g, axis), a.value.shape).astype(float)

    return Node(out, ((a, vjp),))


def vmean(a: Node, axis: int | None = None) -> Node:
    count = a.value.size if axis is None else a.value.shape[axis]
    return vsum(a, axis=axis) * (1.0 / count)


def logsumexp_node(a: Node, axis: int | None = None) -> Node:
    v = a.value
    vmax = np.max(v, axis=axis, keepdims=True)
    shifted = np.exp(v - vmax)
    total = np.sum(shifted, axis=axis, keepdims=True)
    out = np.squeeze(vmax + np.log(total), axis=axis) if axis is not None else float(
        (vmax + np.log(total)).reshape(())
    )
    softmax = shifted / total

    def vjp(g):
        if axis is None:
            return g * softmax
        return np.expand_dims(g, axis) * softmax

    return Node(out, ((a, vjp),))


def reshape(a: Node, shape: tuple[int, ...]) -> Node:
    return Node(a.value.reshape(shape), ((a, lambda g: np.asarray(g).reshape(a.value.shape)),))


def slice1d(a: Node, start: int, stop: int) -> Node:
    if a.value.ndim != 1:
        raise ValueError("slice1d expects a vector node")

    def vjp(g):
        out = np.zeros_like(a.value)
        out[start:stop] = g
        return out

    return Node(a.value[start:stop], ((a, vjp),))


# ----------------------------------------------------------------------
# composite log densities


def normal_logpdf_sum(x, mean, log_std) -> Node:
    """Summed Gaussian log density with elementwise mean and log scale.

    ``log_std`` may be scalar, per-coordinate, or the full broadcast shape;
    its contribution is counted once per broadcast element.
    """
    x, mean, log_std = as_node(x), as_node(mean), as_node(log_std)
    z = (x - mean) * exp(-log_std)
    shape = np.broadcast_shapes(x.value.shape, mean.value.shape, log_std.value.shape)
    n = int(np.prod(shape)) if shape else 1
    replication = n / max(log_std.value.size, 1)
    return vsum(z * z) * (-0.5) - vsum(log_std) * replication - 0.5 * n * _LOG_2PI


def normal_logpdf_rows(x, mean, log_std) -> Node:
    """Row-summed Gaussian log density for (n, d) inputs; returns shape (n,)."""
    x, mean, log_std = as_node(x), as_node(mean), as_node(log_std)
    if x.value.ndim != 2:
        raise ValueError("normal_logpdf_rows expects (n, d) observations")
    d = x.value.shape[1]
    z = (x - mean) * exp(-log_std)
    quad = vsum(z * z, axis=1) * (-0.5)
    if log_std.value.ndim == 2:
        row_logdet = vsum(log_std, axis=1)
    else:
        row_logdet = vsum(log_std) * (d / max(log_std.value.size, 1))
    return quad - row_logdet - 0.5 * d * _LOG_2PI


_PROB_FLOOR = 1e-7


def bernoulli_logpmf_rows(logits: Node, targets: np.ndarray) -> Node:
    """Row-summed Bernoulli log mass; probabilities squashed into
    [1e-7, 1 - 1e-7] so the value stays finite for any logits."""
    targets = np.asarray(targets, dtype=float)
    p = clip(sigmoid(logits), _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    per_elem = as_node(targets) * log(p) + as_node(1.0 - targets) * log(as_node(1.0) - p)
    return vsum(per_elem, axis=1)


# ----------------------------------------------------------------------
# backward pass


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Node) -> None:
    """Populate ``.grad`` on every node reachable from the scalar ``root``."""
    if root.value.size != 1:
        raise ValueError("backward expects a scalar root")
    order = _topo_order(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        node.grad = g
        for parent, vjp in node.parents:
            contribution = np.asarray(vjp(g), dtype=float)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contribution
            else:
                grads[key] = contribution


def gradients(root: Node, leaves: dict[str, Node]) -> dict[str, np.ndarray]:
    """Backward pass returning the gradient for each named leaf."""
    backward(root)
    out = {}
    for name, node in leaves.items():
        out[name] = np.zeros_like(node.value) if node.grad is None else node.grad
    return out
