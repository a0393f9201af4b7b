"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Supports exactly the op set the classifier family needs: affine maps,
relu/tanh, softmax cross-entropy, elementwise add/sub/mul, and sum/mean
reductions. Anything else raises :class:`CapabilityError` instead of
silently producing a wrong gradient.

Ops accept :class:`Node` or plain arrays/scalars; plain inputs are treated
as constants. Gradients are exact (no numeric differentiation), and
:func:`finite_difference_gradient` provides the independent central-difference
oracle used to validate them.
"""

from __future__ import annotations

import numpy as np

from .errors import CapabilityError, DomainError, ShapeError
from .params import ParameterVector


def _value(x):
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Node:
    """A value in the computation graph, with vjp closures to its parents."""

    __slots__ = ("value", "parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        # parents: tuple of (Node, vjp) where vjp maps output-grad -> parent-grad
        self.parents = tuple(parents)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Node):
            raise CapabilityError("division by a traced value is not supported")
        return mul(self, 1.0 / float(other))

    def __rtruediv__(self, other):
        raise CapabilityError("division by a traced value is not supported")

    def __pow__(self, exponent):
        if exponent == 2:
            return mul(self, self)
        raise CapabilityError(f"power {exponent!r} is not supported; only square")


def _binary(a, b, out_value, vjp_a, vjp_b):
    parents = []
    if isinstance(a, Node):
        parents.append((a, vjp_a))
    if isinstance(b, Node):
        parents.append((b, vjp_b))
    return Node(out_value, parents)


def add(a, b):
    va, vb = _value(a), _value(b)
    return _binary(
        a,
        b,
        va + vb,
        lambda g: _unbroadcast(g, va.shape),
        lambda g: _unbroadcast(g, vb.shape),
    )


def sub(a, b):
    va, vb = _value(a), _value(b)
    return _binary(
        a,
        b,
        va - vb,
        lambda g: _unbroadcast(g, va.shape),
        lambda g: _unbroadcast(-g, vb.shape),
    )


def mul(a, b):
    va, vb = _value(a), _value(b)
    return _binary(
        a,
        b,
        va * vb,
        lambda g: _unbroadcast(g * vb, va.shape),
        lambda g: _unbroadcast(g * va, vb.shape),
    )


def matmul(a, b):
    va, vb = _value(a), _value(b)
    if va.ndim != 2 or vb.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {va.shape} @ {vb.shape}")
    return _binary(
        a,
        b,
        va @ vb,
        lambda g: g @ vb.T,
        lambda g: va.T @ g,
    )


def relu(x):
    v = _value(x)
    out = np.maximum(v, 0.0)
    if not isinstance(x, Node):
        return Node(out)
    mask = v > 0
    return Node(out, [(x, lambda g: g * mask)])


def tanh(x):
    v = _value(x)
    out = np.tanh(v)
    if not isinstance(x, Node):
        return Node(out)
    return Node(out, [(x, lambda g: g * (1.0 - out * out))])


def sum_(x, axis=None):
    v = _value(x)
    out = v.sum(axis=axis)

    def vjp(g):
        g = np.asarray(g)
        if axis is None:
            return np.broadcast_to(g, v.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), v.shape).copy()

    if not isinstance(x, Node):
        return Node(out)
    return Node(out, [(x, vjp)])


def mean_(x, axis=None):
    v = _value(x)
    count = v.size if axis is None else v.shape[axis]
    return sum_(x, axis=axis) * (1.0 / count)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Plain-array stable softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Per-example cross-entropy of softmax(logits) against integer labels.

    Returns a length-n Node; reduce with mean_ or sum_ as needed.
    """
    v = _value(logits)
    labels = np.asarray(labels)
    if v.ndim != 2:
        raise ShapeError(f"logits must be (n, K), got {v.shape}")
    if labels.shape != (v.shape[0],):
        raise ShapeError(f"labels must be ({v.shape[0]},), got {labels.shape}")
    shifted = v - v.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1)) + v.max(axis=1)
    picked = v[np.arange(v.shape[0]), labels]
    out = logsumexp - picked
    if not isinstance(logits, Node):
        return Node(out)
    probs = softmax(v)

    def vjp(g):
        d = probs.copy()
        d[np.arange(v.shape[0]), labels] -= 1.0
        return d * np.asarray(g)[:, None]

    return Node(out, [(logits, vjp)])


def _toposort(out: Node) -> list[Node]:
    order, seen, stack = [], set(), [(out, False)]
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
            stack.append((parent, False))
    return order  # reverse topological: children after parents


def gradients(out: Node, leaves) -> list[np.ndarray]:
    """Backpropagate from a scalar Node; returns one gradient per leaf."""
    if out.value.size != 1:
        raise DomainError(f"output must be scalar, has shape {out.value.shape}")
    grads = {id(out): np.ones_like(out.value)}
    for node in reversed(_toposort(out)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
        if not node.parents:
            grads[id(node)] = g  # keep leaf grads
    return [
        grads.get(id(leaf), np.zeros_like(leaf.value)) for leaf in leaves
    ]


def param_nodes(theta: ParameterVector) -> dict:
    """Leaf Nodes for each named segment of a parameter vector."""
    return {name: Node(seg) for name, seg in theta.segments().items()}


def grad(loss_fn, theta: ParameterVector) -> ParameterVector:
    """Exact reverse-mode gradient of a scalar loss of the parameters.

    `loss_fn` receives a dict mapping segment names to leaf Nodes and must
    build its result from this module's op set.
    """
    return value_and_grad(loss_fn, theta)[1]


def value_and_grad(loss_fn, theta: ParameterVector):
    nodes = param_nodes(theta)
    out = loss_fn(nodes)
    if not isinstance(out, Node):
        raise CapabilityError("loss_fn must return a traced scalar Node")
    leaves = [nodes[name] for name, _ in theta.layout]
    gs = gradients(out, leaves)
    flat = (
        np.concatenate([g.ravel() for g in gs]) if gs else np.empty(0)
    )
    return float(out.value), theta.with_values(flat)


def finite_difference_gradient(
    loss_fn, theta: ParameterVector, step: float = 1e-5
) -> ParameterVector:
    """Central-difference gradient oracle; loss_fn takes plain segment arrays."""
    base = theta.values
    out = np.empty_like(base)
    for i in range(base.size):
        up, down = base.copy(), base.copy()
        up[i] += step
        down[i] -= step
        fu = loss_fn(theta.with_values(up).segments())
        fd = loss_fn(theta.with_values(down).segments())
        out[i] = (fu - fd) / (2.0 * step)
    return theta.with_values(out)
