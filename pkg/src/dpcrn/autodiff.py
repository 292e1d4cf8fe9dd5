"""Reverse-mode differentiation over a recorded op graph.

The tape is coarse-grained: every neural layer contributes a single node
with a hand-derived vector-Jacobian product (the generic elementwise and
reduction primitives below cover the loss plumbing). Nodes also keep a
forward closure so a recorded graph can be re-executed; replay reproduces
the original outputs bit-identically.
"""

import numpy as np

from .errors import ValidationError


class Node:
    __slots__ = ("data", "grad", "parents", "vjp", "fwd")

    def __init__(self, data, parents=(), vjp=None, fwd=None):
        self.data = data
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        self.fwd = fwd


class GradTape:
    """Execution-ordered op record; single-writer."""

    def __init__(self):
        self.nodes = []
        self.params = {}

    def leaf(self, data, name=None):
        node = Node(np.asarray(data))
        self.nodes.append(node)
        if name is not None:
            if name in self.params:
                raise ValidationError(f"duplicate parameter name: {name}")
            self.params[name] = node
        return node

    def record(self, data, parents, vjp, fwd=None):
        node = Node(data, tuple(parents), vjp, fwd)
        self.nodes.append(node)
        return node

    def replay(self):
        """Recompute every recorded node from its parents, in order."""
        if not self.nodes:
            raise ValidationError("empty tape")
        for node in self.nodes:
            if node.fwd is not None:
                node.data = node.fwd(*[p.data for p in node.parents])
        return self.nodes[-1].data


def backward(tape: GradTape, loss_grad, node: Node | None = None):
    """Reverse-accumulate from the tape's last node (or `node`) seeded with
    loss_grad; returns {param name: gradient array}."""
    if not tape.nodes:
        raise ValidationError("empty tape")
    root = tape.nodes[-1] if node is None else node
    for n in tape.nodes:
        n.grad = None
    root.grad = np.asarray(loss_grad, dtype=root.data.dtype)
    for n in reversed(tape.nodes):
        if n.grad is None or n.vjp is None:
            continue
        parent_grads = n.vjp(n.grad)
        for p, g in zip(n.parents, parent_grads):
            if g is None:
                continue
            if p.grad is None:
                p.grad = g
            else:
                p.grad = p.grad + g
    out = {}
    for name, p in tape.params.items():
        out[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return out


# ---------------------------------------------------------------------------
# generic primitives; with tape=None they work directly on arrays
# ---------------------------------------------------------------------------


def val(x):
    return x.data if isinstance(x, Node) else x


def _unbroadcast(g, shape):
    """Sum g down to `shape` (adjoint of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(tape, a, b):
    out = val(a) + val(b)
    if tape is None:
        return out
    ash, bsh = a.data.shape, b.data.shape
    return tape.record(
        out, (a, b),
        lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh)),
        lambda x, y: x + y,
    )


def sub(tape, a, b):
    out = val(a) - val(b)
    if tape is None:
        return out
    ash, bsh = a.data.shape, b.data.shape
    return tape.record(
        out, (a, b),
        lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh)),
        lambda x, y: x - y,
    )


def mul(tape, a, b):
    out = val(a) * val(b)
    if tape is None:
        return out
    ash, bsh = a.data.shape, b.data.shape
    return tape.record(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, ash), _unbroadcast(g * a.data, bsh)),
        lambda x, y: x * y,
    )


def scale(tape, a, k: float):
    out = val(a) * k
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (g * k,), lambda x: x * k)


def add_const(tape, a, k: float):
    out = val(a) + k
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (g,), lambda x: x + k)


def square(tape, a):
    out = val(a) * val(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (2.0 * g * a.data,), lambda x: x * x)


def sqrt(tape, a):
    out = np.sqrt(val(a))
    if tape is None:
        return out
    cap = out
    return tape.record(
        out, (a,),
        # subgradient 0 at exactly zero (denominator floored)
        lambda g: (g * 0.5 / np.maximum(cap, np.finfo(cap.dtype).tiny),),
        np.sqrt,
    )


def log(tape, a):
    out = np.log(val(a))
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (g / a.data,), np.log)


def sum_all(tape, a):
    out = np.asarray(val(a).sum())
    if tape is None:
        return out
    sh = a.data.shape

    def vjp(g):
        return (np.broadcast_to(np.asarray(g), sh).astype(a.data.dtype),)

    return tape.record(out, (a,), vjp, lambda x: np.asarray(x.sum()))


def mean_all(tape, a):
    n = val(a).size
    return scale(tape, sum_all(tape, a), 1.0 / n)


def reshape(tape, a, shape):
    out = val(a).reshape(shape)
    if tape is None:
        return out
    orig = a.data.shape
    return tape.record(
        out, (a,), lambda g: (g.reshape(orig),), lambda x: x.reshape(shape)
    )


def transpose(tape, a, axes):
    out = np.ascontiguousarray(val(a).transpose(axes))
    if tape is None:
        return out
    inv = tuple(np.argsort(axes))
    return tape.record(
        out, (a,),
        lambda g: (np.ascontiguousarray(g.transpose(inv)),),
        lambda x: np.ascontiguousarray(x.transpose(axes)),
    )


def reverse(tape, a, axis):
    out = np.ascontiguousarray(np.flip(val(a), axis=axis))
    if tape is None:
        return out
    return tape.record(
        out, (a,),
        lambda g: (np.ascontiguousarray(np.flip(g, axis=axis)),),
        lambda x: np.ascontiguousarray(np.flip(x, axis=axis)),
    )


def concat(tape, parts, axis):
    datas = [val(p) for p in parts]
    out = np.concatenate(datas, axis=axis)
    if tape is None:
        return out
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return tape.record(
        out, tuple(parts), vjp, lambda *xs: np.concatenate(xs, axis=axis)
    )


def astype(tape, a, dtype):
    out = val(a).astype(dtype)
    if tape is None:
        return out
    src = a.data.dtype
    return tape.record(
        out, (a,), lambda g: (g.astype(src),), lambda x: x.astype(dtype)
    )


def matmul(tape, a, b):
    out = val(a) @ val(b)
    if tape is None:
        return out
    return tape.record(
        out, (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        lambda x, y: x @ y,
    )
