"""Minimal reverse-mode gradient engine over dense float64 arrays.

The value carrier is a C-contiguous float64 ndarray. Every operation builds a
fresh Node in a define-by-run graph: the graph is rebuilt on each forward pass
and parameters persist as leaf nodes between passes. Arrays held by nodes are
treated as immutable once created; optimizers replace a parameter's array
rather than mutating it in place.

Gradient semantics worth knowing before reading the ops:

* ``stop_gradient`` is an identity in the forward direction whose node is a
  hard wall in the backward direction. Ancestors reachable only through it
  receive a bitwise-zero gradient because the traversal never visits them.
* ``relu`` uses the subgradient 0 at exactly 0 (the mask is ``x > 0``).
* ``log_softmax_rows`` subtracts the row maximum before exponentiating, so
  large logits cannot overflow.
* ``backward`` walks the graph once in reverse topological order and
  accumulates into each node; the schedule is deterministic given the graph.

Broadcasting is deliberately restricted to the one pattern the networks here
need: adding or subtracting a length-d vector row-wise against an (N, d)
matrix. Everything else requires exact shape agreement.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, EvaluationError, ShapeError

Array = np.ndarray

# Gradient rule: maps the upstream gradient (same shape as the node's data)
# to this parent's contribution (same shape as the parent's data).
GradFn = Callable[[Array], Array]


def as_tensor(values) -> Array:
    """Coerce to a C-contiguous float64 array (scalars become 0-d arrays).

    np.ascontiguousarray promotes 0-d input to shape (1,), which would make
    every scalar node 1-d and break float(g) in the reduction backwards, so
    0-d results are returned as numpy builds them.
    """
    arr = np.asarray(values, dtype=np.float64)
    return arr if arr.ndim == 0 else np.ascontiguousarray(arr)


class Node:
    """One vertex of the computation graph.

    Fields:
        data:          float64 ndarray holding the forward value.
        parents:       input nodes, in op order.
        grad_fns:      one gradient rule per parent.
        requires_grad: True when some parameter is reachable upstream.
        stop_grad:     True for stop_gradient markers; backward never
                       descends through such a node.
        grad:          set by backward() on visited nodes; diagnostic only,
                       the authoritative result is backward's return value.
    """

    __slots__ = ("data", "parents", "grad_fns", "requires_grad", "stop_grad", "grad", "name")

    def __init__(
        self,
        data,
        parents: Sequence["Node"] = (),
        grad_fns: Sequence[GradFn] = (),
        requires_grad: bool = False,
        stop_grad: bool = False,
        name: str | None = None,
    ):
        self.data = as_tensor(data)
        self.parents = tuple(parents)
        self.grad_fns = tuple(grad_fns)
        self.requires_grad = requires_grad
        self.stop_grad = stop_grad
        self.grad: Array | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element node, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # Sugar used by the loss code. Node * float scales, Node * Node is
    # elementwise, and +/- follow the add/sub ops below.
    def __add__(self, other: "Node") -> "Node":
        return add(self, other)

    def __sub__(self, other: "Node") -> "Node":
        return sub(self, other)

    def __neg__(self) -> "Node":
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))


def constant(values, name: str | None = None) -> Node:
    """A graph leaf that never receives gradient."""
    return Node(values, name=name)


def param(values, name: str | None = None) -> Node:
    """A trainable graph leaf; backward() reports its gradient."""
    return Node(values, requires_grad=True, name=name)


def _op(data: Array, parents: Sequence[Node], grad_fns: Sequence[GradFn]) -> Node:
    rg = any(p.requires_grad for p in parents)
    return Node(data, parents, grad_fns, requires_grad=rg)


def stop_gradient(x: Node) -> Node:
    """Identity forward, hard zero backward.

    The result is constant to the optimizer: every ancestor whose only route
    to the loss runs through this node keeps a gradient of exactly 0.0.
    """
    return Node(x.data, parents=(x,), grad_fns=(), requires_grad=False, stop_grad=True)


# ---------------------------------------------------------------------------
# elementwise and affine ops


def add(a: Node, b: Node) -> Node:
    """a + b for equal shapes, or (N, d) + (d,) broadcast across rows."""
    if a.shape == b.shape:
        return _op(a.data + b.data, (a, b), (lambda g: g, lambda g: g))
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return _op(a.data + b.data, (a, b), (lambda g: g, lambda g: g.sum(axis=0)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Node, b: Node) -> Node:
    """a - b with the same shape rules as add."""
    return add(a, neg(b))


def neg(x: Node) -> Node:
    return _op(-x.data, (x,), (lambda g: -g,))


def scale(x: Node, s: float) -> Node:
    """Multiply by a python float (a constant, not a node)."""
    s = float(s)
    return _op(x.data * s, (x,), (lambda g: g * s,))


def mul(a: Node, b: Node) -> Node:
    """Elementwise product; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return _op(a.data * b.data, (a, b), (lambda g: g * b.data, lambda g: g * a.data))


def square(x: Node) -> Node:
    return _op(x.data * x.data, (x,), (lambda g: 2.0 * x.data * g,))


def relu(x: Node) -> Node:
    # Strict inequality: the subgradient at exactly 0 is 0.
    mask = x.data > 0.0
    return _op(np.where(mask, x.data, 0.0), (x,), (lambda g: g * mask,))


def reshape(x: Node, shape: tuple[int, ...]) -> Node:
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    old = x.shape
    return _op(x.data.reshape(shape).copy(), (x,), (lambda g: g.reshape(old),))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Node, b: Node) -> Node:
    """2-d matrix product (m, k) @ (k, n)."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: need 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")
    return _op(a.data @ b.data, (a, b), (lambda g: g @ b.data.T, lambda g: a.data.T @ g))


def transpose(x: Node) -> Node:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: need a 2-d operand, got {x.shape}")
    return _op(np.ascontiguousarray(x.data.T), (x,), (lambda g: np.ascontiguousarray(g.T),))


def dot(a: Node, b: Node) -> Node:
    """Inner product of two 1-d vectors; returns a scalar node."""
    if a.data.ndim != 1 or b.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: need equal-length vectors, got {a.shape} and {b.shape}")
    return _op(
        np.asarray(a.data @ b.data),
        (a, b),
        (lambda g: float(g) * b.data, lambda g: float(g) * a.data),
    )


def rowwise_dot(a: Node, b: Node) -> Node:
    """Per-row inner products of two (N, d) matrices; returns an (N,) node."""
    if a.data.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"rowwise_dot: need matching 2-d shapes, got {a.shape} and {b.shape}")
    return _op(
        np.einsum("ij,ij->i", a.data, b.data),
        (a, b),
        (lambda g: g[:, None] * b.data, lambda g: g[:, None] * a.data),
    )


# ---------------------------------------------------------------------------
# reductions


def sum_all(x: Node) -> Node:
    return _op(np.asarray(x.data.sum()), (x,), (lambda g: np.full(x.shape, float(g)),))


def mean_all(x: Node) -> Node:
    n = x.data.size
    if n == 0:
        raise ContractError("mean_all: empty operand")
    return _op(np.asarray(x.data.mean()), (x,), (lambda g: np.full(x.shape, float(g) / n),))


def mean_rows(x: Node) -> Node:
    """Column means of an (N, d) matrix; returns a (d,) node."""
    if x.data.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"mean_rows: need a non-empty 2-d operand, got {x.shape}")
    n = x.shape[0]
    return _op(
        x.data.mean(axis=0),
        (x,),
        (lambda g: np.broadcast_to(g / n, x.shape).copy(),),
    )


# ---------------------------------------------------------------------------
# norms and normalization


def frobenius_norm(x: Node) -> Node:
    n = float(np.sqrt(np.sum(x.data * x.data)))
    if n == 0.0:
        raise DegenerateInputError("frobenius_norm: zero operand has no normalized direction")
    return _op(np.asarray(n), (x,), (lambda g: (float(g) / n) * x.data,))


def l2_normalize(v: Node) -> Node:
    """v / ||v|| for a 1-d vector. Gradient projects out the radial part."""
    if v.data.ndim != 1:
        raise ShapeError(f"l2_normalize: need a 1-d operand, got {v.shape}")
    n = float(np.linalg.norm(v.data))
    if n == 0.0:
        raise DegenerateInputError("l2_normalize: zero vector")
    y = v.data / n

    def back(g: Array) -> Array:
        return (g - y * float(y @ g)) / n

    return _op(y, (v,), (back,))


def l2_normalize_rows(x: Node) -> Node:
    """Row-wise unit normalization of an (N, d) matrix."""
    if x.data.ndim != 2:
        raise ShapeError(f"l2_normalize_rows: need a 2-d operand, got {x.shape}")
    norms = np.linalg.norm(x.data, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"l2_normalize_rows: zero vector at row {int(zero[0])}")
    y = x.data / norms[:, None]

    def back(g: Array) -> Array:
        radial = np.einsum("ij,ij->i", y, g)
        return (g - y * radial[:, None]) / norms[:, None]

    return _op(y, (x,), (back,))


# ---------------------------------------------------------------------------
# softmax


def log_softmax_rows(x: Node) -> Node:
    """Row-wise log-softmax of an (N, C) matrix, stabilized by max subtraction."""
    if x.data.ndim != 2:
        raise ShapeError(f"log_softmax_rows: need a 2-d operand, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    soft = np.exp(out)

    def back(g: Array) -> Array:
        return g - soft * g.sum(axis=1, keepdims=True)

    return _op(out, (x,), (back,))


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Node) -> list[Node]:
    """Post-order over the requires-grad subgraph (parents before children).

    A node is marked discovered when it is expanded, not when it is first
    pushed. Marking on push appends a node reached along a short path before
    a consumer reached along a longer one (the diamond v -> gram and
    v -> transpose -> gram), and the reversed sweep in backward() would then
    read the node's gradient before that consumer deposits its share.
    """
    order: list[Node] = []
    discovered: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in discovered:
            continue
        discovered.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            # Constants and stop_gradient markers prune the walk here.
            if parent.requires_grad and id(parent) not in discovered:
                stack.append((parent, False))
    return order


def backward(root: Node) -> dict[Node, Array]:
    """Accumulate gradients of a scalar root; return {leaf parameter: grad}.

    Visited nodes also get their gradient stored on ``.grad``. Parameters that
    the loss cannot reach (for example, only through stop_gradient) are absent
    from the returned map; callers treat absence as an exact zero.
    """
    if root.data.size != 1:
        raise ContractError(f"backward: root must be scalar, got shape {root.shape}")
    order = _topo_order(root)
    pending: dict[int, Array] = {id(root): np.ones_like(root.data)}
    leaves: dict[Node, Array] = {}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g
            if not node.parents:
                leaves[node] = g
        for parent, fn in zip(node.parents, node.grad_fns):
            if not parent.requires_grad:
                continue
            contrib = fn(g)
            held = pending.get(id(parent))
            pending[id(parent)] = contrib if held is None else held + contrib
    return leaves


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(
    f: Callable[[], Node],
    params: Iterable[Node],
    step: float = 1e-5,
    tol: float | None = None,
) -> float:
    """Compare backward() against central finite differences.

    ``f`` rebuilds the scalar loss from the current parameter arrays, so each
    perturbed evaluation reruns the full forward pass. Returns the max over
    all coordinates of |analytic - numeric| / max(1, |numeric|); if ``tol``
    is given, exceeding it raises ContractError naming the worst coordinate.
    """
    params = list(params)
    loss = f()
    if loss.data.size != 1:
        raise ContractError(f"grad_check: f() must be scalar, got shape {loss.shape}")
    if not np.isfinite(loss.data):
        raise EvaluationError("grad_check: f() is not finite at the base point")
    grads = backward(loss)

    worst = 0.0
    worst_at = ""
    for k, p in enumerate(params):
        analytic = grads.get(p)
        if analytic is None:
            analytic = np.zeros_like(p.data)
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + step
            f_plus = f().item()
            p.data[idx] = orig - step
            f_minus = f().item()
            p.data[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise EvaluationError(f"grad_check: non-finite value near param {k} index {idx}")
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(float(analytic[idx]) - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
                worst_at = f"param {k} index {idx}"
    if tol is not None and worst > tol:
        raise ContractError(f"grad_check: max relative error {worst:.3e} at {worst_at} exceeds {tol:.1e}")
    return worst


def collect_grads(params: Sequence[Node], grads: Mapping[Node, Array]) -> list[Array]:
    """Gradient per parameter, with exact zeros for unreached parameters."""
    return [grads.get(p, np.zeros_like(p.data)) for p in params]
