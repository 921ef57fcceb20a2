"""Minimal reverse-mode differentiation over numpy arrays.

Every primitive below accepts either plain arrays or :class:`Node` objects. If
no argument is a node, the primitive just returns a numpy array, so the same
model/loss code serves both gradient-free evaluation and taped evaluation.

Nodes are appended to their tape in creation order, which is a topological
order of the computation; :func:`backward` walks that list in reverse.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractViolation

# Value written at illegal entries of a masked log-softmax. exp() of it is
# exactly 0.0 and products with zero stay finite (unlike -inf).
MASKED_LOGPROB = -1e4


class Node:
    __slots__ = ("value", "tape", "parents", "backward_fn", "grad", "param")
    __array_priority__ = 1000

    def __init__(self, value, tape, parents=(), backward_fn=None, param=None):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.grad = None
        self.param = param

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Node(shape={self.shape})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Tape:
    """Records primitive operations for one backward pass.

    Parameter leaves are created with :meth:`param`; each leaf remembers the
    slice of the flat parameter store it reads, so :func:`backward` can return
    one flat gradient array aligned with the store.
    """

    def __init__(self, store=None):
        self.store = store
        self.nodes: list[Node] = []
        self.consumed = False
        self._leaves: dict[str, Node] = {}

    def param(self, name: str) -> Node:
        if self.store is None:
            raise ContractViolation("tape has no parameter store attached")
        node = self._leaves.get(name)
        if node is None:
            node = Node(self.store.view(name), self, param=name)
            self.nodes.append(node)
            self._leaves[name] = node
        return node

    def constant(self, value) -> Node:
        node = Node(np.asarray(value, dtype=float), self)
        self.nodes.append(node)
        return node

    def record(self, value, parents, backward_fn) -> Node:
        node = Node(value, self, tuple(parents), backward_fn)
        self.nodes.append(node)
        return node


def backward(tape: Tape, output: Node, upstream: float = 1.0) -> np.ndarray:
    """Back-propagate from ``output`` and return the flat parameter gradient.

    Parameters not touched by the computation get zero gradient. A tape can be
    consumed once.
    """
    if tape.consumed:
        raise ContractViolation("tape already consumed")
    if not isinstance(output, Node) or output.tape is not tape:
        raise ContractViolation("output was not recorded on this tape")
    tape.consumed = True
    output.grad = np.full(np.shape(output.value), float(upstream))
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None or node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not isinstance(parent, Node):
                continue
            if parent.grad is None:
                parent.grad = np.array(pg, dtype=float, copy=True)
            else:
                parent.grad = parent.grad + pg
    flat = np.zeros(tape.store.size if tape.store is not None else 0)
    for name, leaf in tape._leaves.items():
        if leaf.grad is not None:
            start, stop, _ = tape.store.slices[name]
            flat[start:stop] += np.asarray(leaf.grad).ravel()
    return flat


# ---------------------------------------------------------------------------
# helpers


def value(x):
    return x.value if isinstance(x, Node) else x


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return None


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _unary(x, fwd: Callable, bwd: Callable):
    """bwd(g, x_value, out_value) -> grad wrt x."""
    xv = value(x)
    out = fwd(xv)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape.record(out, (x,), lambda g: (bwd(g, xv, out),))


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    av, bv = value(a), value(b)
    out = np.add(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    av, bv = value(a), value(b)
    out = np.subtract(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    av, bv = value(a), value(b)
    out = np.multiply(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return tape.record(
        out, (a, b), lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb))
    )


def div(a, b):
    av, bv = value(a), value(b)
    out = np.divide(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return tape.record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, sa), _unbroadcast(-g * av / (bv * bv), sb)),
    )


def neg(x):
    return _unary(x, np.negative, lambda g, xv, out: -g)


def square(x):
    return _unary(x, np.square, lambda g, xv, out: 2.0 * g * xv)


def exp(x):
    return _unary(x, np.exp, lambda g, xv, out: g * out)


def log(x):
    return _unary(x, np.log, lambda g, xv, out: g / xv)


def relu(x):
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda g, xv, out: g * (xv > 0))


def leaky_relu(x, slope=0.01):
    return _unary(
        x,
        lambda v: np.where(v > 0, v, slope * v),
        lambda g, xv, out: g * np.where(xv > 0, 1.0, slope),
    )


def softplus(x):
    def _sigmoid(v):
        return np.exp(-np.logaddexp(0.0, -v))

    return _unary(x, lambda v: np.logaddexp(0.0, v), lambda g, xv, out: g * _sigmoid(xv))


def clip(x, lo, hi):
    """Clamp values; gradient flows only through the unclamped entries."""
    return _unary(
        x,
        lambda v: np.clip(v, lo, hi),
        lambda g, xv, out: g * ((xv > lo) & (xv < hi)),
    )


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    av, bv = value(a), value(b)
    out = np.where(cond, av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return tape.record(
        out,
        (a, b),
        lambda g: (_unbroadcast(np.where(cond, g, 0.0), sa), _unbroadcast(np.where(cond, 0.0, g), sb)),
    )


# ---------------------------------------------------------------------------
# linear algebra, reductions, indexing


def matmul(a, b):
    av, bv = value(a), value(b)
    out = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def bwd(g):
        ga = g @ np.swapaxes(bv, -1, -2) if np.ndim(bv) > 1 else np.outer(g, bv)
        if np.ndim(av) > 1:
            gb = np.swapaxes(av, -1, -2) @ g
        else:
            gb = np.outer(av, g)
        return ga, gb

    return tape.record(out, (a, b), bwd)


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    xv = value(x)
    out = np.sum(xv, axis=axis, keepdims=keepdims)
    tape = _tape_of(x)
    if tape is None:
        return out
    shape = np.shape(xv)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return tape.record(out, (x,), bwd)


def mean(x, axis=None):
    n = np.size(value(x)) if axis is None else np.shape(value(x))[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def logsumexp(x, axis=-1):
    xv = value(x)
    m = np.max(xv, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(xv - m), axis=axis, keepdims=True)
    out_k = np.log(s) + m
    out = np.squeeze(out_k, axis=axis)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape.record(
        out, (x,), lambda g: (np.expand_dims(g, axis) * np.exp(xv - out_k),)
    )


def log_softmax_masked(x, mask, axis=-1):
    """Log-softmax restricted to ``mask``; illegal entries get MASKED_LOGPROB.

    Raises ContractViolation if any row has no legal entry.
    """
    mask = np.asarray(mask, dtype=bool)
    xv = value(x)
    if not np.all(np.any(mask, axis=axis)):
        raise ContractViolation("softmax over a row with no legal entry")
    masked = np.where(mask, xv, -np.inf)
    m = np.max(masked, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(masked - m), axis=axis, keepdims=True)) + m
    out = np.where(mask, xv - lse, MASKED_LOGPROB)
    tape = _tape_of(x)
    if tape is None:
        return out
    p = np.where(mask, np.exp(out), 0.0)

    def bwd(g):
        g = np.where(mask, g, 0.0)
        return (g - p * np.sum(g, axis=axis, keepdims=True),)

    return tape.record(out, (x,), bwd)


def getitem(x, idx):
    xv = value(x)
    out = xv[idx]
    tape = _tape_of(x)
    if tape is None:
        return out
    shape = np.shape(xv)

    def bwd(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return tape.record(out, (x,), bwd)


def pick(x, cols):
    """Row-wise selection ``x[i, cols[i]]`` for a 2-D input."""
    cols = np.asarray(cols, dtype=int)
    return getitem(x, (np.arange(cols.shape[0]), cols))


def scatter_add(values, index, size):
    """Sum rows of ``values`` into ``size`` buckets given by ``index`` (axis 0)."""
    index = np.asarray(index, dtype=int)
    vv = value(values)
    out = np.zeros((size,) + np.shape(vv)[1:])
    np.add.at(out, index, vv)
    tape = _tape_of(values)
    if tape is None:
        return out
    return tape.record(out, (values,), lambda g: (g[index],))


def cumsum(x, axis=-1):
    xv = value(x)
    out = np.cumsum(xv, axis=axis)
    tape = _tape_of(x)
    if tape is None:
        return out

    def bwd(g):
        return (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),)

    return tape.record(out, (x,), bwd)


def reshape(x, shape):
    xv = value(x)
    out = np.reshape(xv, shape)
    tape = _tape_of(x)
    if tape is None:
        return out
    orig = np.shape(xv)
    return tape.record(out, (x,), lambda g: (np.reshape(g, orig),))


def concat(xs: Sequence, axis=0):
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    bounds = np.cumsum([np.shape(v)[axis] for v in vals])[:-1]
    return tape.record(out, tuple(xs), lambda g: tuple(np.split(g, bounds, axis=axis)))


def softmax_masked(logits, mask, temperature: float = 1.0, epsilon: float = 0.0):
    """Probabilities over legal entries (plain numpy, no gradient).

    ``temperature`` divides the logits; ``epsilon`` mixes in the uniform
    distribution over legal entries.
    """
    mask = np.asarray(mask, dtype=bool)
    logp = log_softmax_masked(np.asarray(value(logits), dtype=float) / temperature, mask)
    p = np.where(mask, np.exp(logp), 0.0)
    if epsilon > 0.0:
        uniform = mask / mask.sum(axis=-1, keepdims=True)
        p = (1.0 - epsilon) * p + epsilon * uniform
    return p
