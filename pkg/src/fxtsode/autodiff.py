"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are built define-by-run: every primitive below takes ``Tensor`` inputs,
computes its value eagerly and records a closure that maps the output adjoint
to the parent adjoints.  ``Tensor.backward`` walks the recorded DAG once in a
fixed reverse topological order, so repeated runs are bit-identical.

Leading axes are treated as batch axes throughout: ``matvec(W, x)`` applies
``W`` to every row of ``x`` and ``dot``/``l2norm`` reduce over the last axis.
"""

from __future__ import annotations

import inspect
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

POW_CLAMP = 1e-12


class GraphError(ValueError):
    """Raised for malformed graphs: bad shapes, unbound or non-finite inputs."""


class Tensor:
    """A node of the computation graph holding a float64 value and its adjoint."""

    __slots__ = ("data", "grad", "op", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf", parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents: tuple[Tensor, ...] = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into ``node.grad`` for every upstream node."""
        if self.data.size != 1:
            raise GraphError(f"backward needs a scalar root, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in reversed(node._parents):
                if id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g

    # operator sugar
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise GraphError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# primitives

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    return Tensor(a.data + b.data, op="add", parents=(a, b),
                  backward=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    return Tensor(a.data - b.data, op="sub", parents=(a, b),
                  backward=lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data * c, op="scale", parents=(a,), backward=lambda g: (g * c,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    _broadcast_shape(a, b, "mul")
    return Tensor(a.data * b.data, op="mul", parents=(a, b),
                  backward=lambda g: (_unbroadcast(g * b.data, a.shape),
                                      _unbroadcast(g * a.data, b.shape)))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise GraphError(f"reshape: {exc}") from None
    return Tensor(out, op="reshape", parents=(a,), backward=lambda g: (g.reshape(a.shape),))


def matvec(w: Tensor, x: Tensor) -> Tensor:
    """``W @ x`` applied along the last axis of ``x`` (shape ``(..., n)`` -> ``(..., m)``)."""
    if w.data.ndim != 2 or x.shape[-1:] != (w.shape[1],):
        raise GraphError(f"matvec: weight {w.shape} incompatible with input {x.shape}")
    out = x.data @ w.data.T

    def backward(g):
        gx = g @ w.data
        gw = g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1])
        return gw, gx

    return Tensor(out, op="matvec", parents=(w, x), backward=backward)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = list(parts)
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise GraphError(f"concat: {exc}") from None
    sizes = np.cumsum([p.data.shape[axis] for p in parts])[:-1]
    return Tensor(out, op="concat", parents=parts,
                  backward=lambda g: tuple(np.split(g, sizes, axis=axis)))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return Tensor(t, op="tanh", parents=(a,), backward=lambda g: (g * (1.0 - t * t),))


def relu(a: Tensor) -> Tensor:
    # derivative 0 at the kink
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), op="relu", parents=(a,),
                  backward=lambda g: (g * mask,))


def hinge(a: Tensor) -> Tensor:
    """max{0, a}; same convention as relu, kept separate for graph readability."""
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), op="hinge", parents=(a,),
                  backward=lambda g: (g * mask,))


def pow_clamped(a: Tensor, p: float) -> Tensor:
    """``a ** p`` for ``a >= 0``; the derivative uses ``max(a, 1e-12)`` as base.

    The value is taken at the true base so that ``pow_clamped(0, p) == 0``.
    """
    if np.any(a.data < 0):
        raise GraphError("pow_clamped: negative base")
    value = a.data ** p
    base = np.maximum(a.data, POW_CLAMP)
    return Tensor(value, op="pow", parents=(a,), backward=lambda g: (g * p * base ** (p - 1.0),))


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product over the last axis."""
    if a.shape != b.shape:
        raise GraphError(f"dot: shapes differ {a.shape} vs {b.shape}")
    out = np.einsum("...i,...i->...", a.data, b.data)
    return Tensor(out, op="dot", parents=(a, b),
                  backward=lambda g: (g[..., None] * b.data, g[..., None] * a.data))


def tsum(a: Tensor) -> Tensor:
    return Tensor(a.data.sum(), op="sum", parents=(a,),
                  backward=lambda g: (np.broadcast_to(g, a.shape).copy(),))


def l2norm(a: Tensor) -> Tensor:
    """Euclidean norm over the last axis; subgradient 0 at the origin."""
    n = np.sqrt(np.einsum("...i,...i->...", a.data, a.data))
    safe = np.where(n > 0, n, 1.0)

    def backward(g):
        return ((g / safe)[..., None] * a.data * (n > 0)[..., None],)

    return Tensor(n, op="l2norm", parents=(a,), backward=backward)


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Per-row cross-entropy ``-log softmax(logits)[label]``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim < 1 or labels.shape != logits.shape[:-1]:
        raise GraphError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[-1]):
        raise GraphError("softmax_cross_entropy: label out of range")
    logp = log_softmax(logits.data)
    onehot = np.zeros_like(logp)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    loss = -(logp * onehot).sum(axis=-1)
    probs = np.exp(logp)
    return Tensor(loss, op="softmax_ce", parents=(logits,),
                  backward=lambda g: (g[..., None] * (probs - onehot),))


# graph-level entry points

def _bind(graph: Callable[..., Tensor], inputs: Mapping[str, object], wrt: Iterable[str] = ()) -> tuple[Tensor, dict[str, Tensor]]:
    wrt = set(wrt)
    names = [p.name for p in inspect.signature(graph).parameters.values()
             if p.kind in (p.POSITIONAL_OR_KEYWORD, p.KEYWORD_ONLY)
             and p.default is inspect.Parameter.empty]
    missing = [n for n in names if n not in inputs]
    if missing:
        raise GraphError(f"unbound input(s): {', '.join(missing)}")
    unknown = wrt - set(inputs)
    if unknown:
        raise GraphError(f"requested input(s) not in graph: {', '.join(sorted(unknown))}")
    bound = {}
    for name, value in inputs.items():
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise GraphError(f"non-finite values in input {name!r}")
        bound[name] = Tensor(arr, requires_grad=name in wrt)
    return graph(**bound), bound


def evaluate(graph: Callable[..., Tensor], inputs: Mapping[str, object]) -> np.ndarray:
    """Run ``graph`` on the named inputs and return the root value."""
    root, _ = _bind(graph, inputs)
    return root.data


def gradient(graph: Callable[..., Tensor], inputs: Mapping[str, object], wrt: Iterable[str]) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``graph`` with respect to the named inputs."""
    wrt = list(wrt)
    root, bound = _bind(graph, inputs, wrt)
    if root.data.size != 1:
        raise GraphError(f"gradient needs a scalar root, got shape {root.shape}")
    root.backward()
    out = {}
    for name in wrt:
        g = bound[name].grad
        out[name] = np.zeros_like(bound[name].data) if g is None else g
    return out
