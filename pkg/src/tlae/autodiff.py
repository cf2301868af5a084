"""Reverse-mode differentiation over the model's computation graph.

A forward pass builds a DAG of `Tensor` nodes. Each node stores its
float64 value, the closure that recomputes the value from its parents
(used by `Tape.replay`), and the closure that routes an incoming
cotangent to the parents. `backward` walks the nodes reachable from a
scalar loss once, in reverse topological order, accumulating gradients.

The op set is fixed to what the model needs: matmul, elementwise math,
row/column slicing and concatenation, bias broadcast, and full-sum
reductions. This is deliberately not a general-purpose autodiff; graphs
are rebuilt per batch and thrown away.

Subgradient conventions: relu'(0) = 0 and d|x|/dx at 0 is 0.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping

import numpy as np

from . import numeric
from .errors import NumericError, ShapeError

GradientSet = dict  # name -> np.ndarray, shape-matched to the parameter

_F64 = np.dtype(np.float64)


class Tensor:
    __slots__ = ("value", "grad", "parents", "requires_grad", "op", "name", "_push", "_recompute")

    def __init__(self, value, *, requires_grad: bool = False, op: str = "leaf", name: str = ""):
        if type(value) is np.ndarray and value.dtype == _F64:
            v = value
        else:
            v = np.asarray(value, dtype=np.float64)
        self.value = v
        self.grad = None
        self.parents: tuple = ()
        self.requires_grad = requires_grad
        self.op = op
        self.name = name
        self._push = None
        self._recompute = None

    @property
    def shape(self):
        return self.value.shape

    def ident(self) -> str:
        return self.name or f"{self.op}{list(self.shape)}@{id(self):x}"

    def __repr__(self):
        return f"Tensor({self.op}, shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(value, name: str = "") -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, op="param", name=name)


def constant(value, name: str = "") -> Tensor:
    return Tensor(value, requires_grad=False, op="const", name=name)


# When a tape recording is active, every op node is appended in creation
# order, which is already a valid topological order (parents exist before
# children). Training uses this to skip the DFS per window.
_recording: list | None = None


def _make(value, parents, push, recompute, op: str) -> Tensor:
    rg = False
    for p in parents:
        if p.requires_grad:
            rg = True
            break
    t = Tensor(value, requires_grad=rg, op=op)
    t.parents = tuple(parents)
    t._push = push
    t._recompute = recompute
    if _recording is not None:
        _recording.append(t)
    return t


def _acc(t: Tensor, g):
    """Accumulate a cotangent that may alias the caller's buffer."""
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _acc_own(t: Tensor, g):
    """Accumulate a freshly allocated cotangent (safe to take by reference)."""
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


# ---------------------------------------------------------------- ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.value.shape} x {b.value.shape}")

    def push(g):
        if a.requires_grad:
            _acc_own(a, g @ b.value.T)
        if b.requires_grad:
            _acc_own(b, a.value.T @ g)

    return _make(a.value @ b.value, (a, b), push, lambda: a.value @ b.value, "matmul")


def _binary_same_shape(a: Tensor, b: Tensor, op: str):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_same_shape(a, b, "add")

    def push(g):
        if a.requires_grad:
            _acc(a, g)
        if b.requires_grad:
            _acc(b, g)

    return _make(a.value + b.value, (a, b), push, lambda: a.value + b.value, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_same_shape(a, b, "sub")

    def push(g):
        if a.requires_grad:
            _acc(a, g)
        if b.requires_grad:
            _acc(b, -g)

    return _make(a.value - b.value, (a, b), push, lambda: a.value - b.value, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_same_shape(a, b, "mul")

    def push(g):
        if a.requires_grad:
            _acc_own(a, g * b.value)
        if b.requires_grad:
            _acc_own(b, g * a.value)

    return _make(a.value * b.value, (a, b), push, lambda: a.value * b.value, "mul")


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Add a (k, 1) bias column to every column of a (k, m) matrix."""
    if bias.value.ndim != 2 or bias.value.shape[1] != 1 or bias.value.shape[0] != a.value.shape[0]:
        raise ShapeError(f"add_bias: bias {bias.value.shape} does not broadcast over {a.value.shape}")

    def push(g):
        if a.requires_grad:
            _acc(a, g)
        if bias.requires_grad:
            _acc_own(bias, g.sum(axis=1, keepdims=True))

    return _make(a.value + bias.value, (a, bias), push, lambda: a.value + bias.value, "add_bias")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def push(g):
        if a.requires_grad:
            _acc_own(a, g * c)

    return _make(a.value * c, (a,), push, lambda: a.value * c, "scale")


def add_const(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def push(g):
        if a.requires_grad:
            _acc(a, g)

    return _make(a.value + c, (a,), push, lambda: a.value + c, "add_const")


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.value, 0.0)

    def push(g):
        if a.requires_grad:
            _acc_own(a, g * (a.value > 0.0))

    return _make(out, (a,), push, lambda: np.maximum(a.value, 0.0), "relu")


def tanh(a: Tensor) -> Tensor:
    t = _make(np.tanh(a.value), (a,), None, lambda: np.tanh(a.value), "tanh")

    def push(g):
        if a.requires_grad:
            _acc_own(a, g * (1.0 - t.value * t.value))

    t._push = push
    return t


def sigmoid(a: Tensor) -> Tensor:
    t = _make(numeric.sigmoid(a.value), (a,), None, lambda: numeric.sigmoid(a.value), "sigmoid")

    def push(g):
        if a.requires_grad:
            _acc_own(a, g * t.value * (1.0 - t.value))

    t._push = push
    return t


def square(a: Tensor) -> Tensor:
    def push(g):
        if a.requires_grad:
            _acc_own(a, 2.0 * a.value * g)

    return _make(a.value * a.value, (a,), push, lambda: a.value * a.value, "square")


def abs_val(a: Tensor) -> Tensor:
    def push(g):
        if a.requires_grad:
            _acc_own(a, g * np.sign(a.value))

    return _make(np.abs(a.value), (a,), push, lambda: np.abs(a.value), "abs")


def sum_all(a: Tensor) -> Tensor:
    def push(g):
        if a.requires_grad:
            _acc(a, np.broadcast_to(g, a.value.shape))

    return _make(np.asarray(a.value.sum()), (a,), push, lambda: np.asarray(a.value.sum()), "sum")


def slice_rows(a: Tensor, r0: int, r1: int) -> Tensor:
    def push(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            a.grad[r0:r1, :] += g

    # Views are safe: values are never mutated after construction.
    return _make(a.value[r0:r1, :], (a,), push, lambda: a.value[r0:r1, :], "slice_rows")


def slice_cols(a: Tensor, c0: int, c1: int) -> Tensor:
    def push(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            a.grad[:, c0:c1] += g

    return _make(a.value[:, c0:c1], (a,), push, lambda: a.value[:, c0:c1], "slice_cols")


def concat_rows(parts) -> Tensor:
    parts = tuple(parts)
    heights = [p.value.shape[0] for p in parts]

    def push(g):
        r = 0
        for p, h in zip(parts, heights):
            if p.requires_grad:
                _acc(p, g[r : r + h, :])
            r += h

    return _make(
        np.concatenate([p.value for p in parts], axis=0),
        parts,
        push,
        lambda: np.concatenate([p.value for p in parts], axis=0),
        "concat_rows",
    )


def concat_cols(parts) -> Tensor:
    parts = tuple(parts)
    widths = [p.value.shape[1] for p in parts]

    def push(g):
        c = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                _acc(p, g[:, c : c + w])
            c += w

    return _make(
        np.concatenate([p.value for p in parts], axis=1),
        parts,
        push,
        lambda: np.concatenate([p.value for p in parts], axis=1),
        "concat_cols",
    )


# ------------------------------------------------------- tape/backward


def _topo_order(root: Tensor) -> list:
    """Parents-before-children ordering of all nodes reachable from root."""
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


class Tape:
    """Topologically ordered record of one forward pass."""

    def __init__(self, nodes: list):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        return cls(_topo_order(root))

    def replay(self) -> None:
        """Re-execute every recorded op in place; leaves keep their values."""
        for n in self.nodes:
            if n._recompute is not None:
                n.value = n._recompute()


class record_tape:
    """Context manager that captures op nodes in creation order."""

    def __enter__(self) -> Tape:
        global _recording
        self._prev = _recording
        tape = Tape([])
        _recording = tape.nodes
        return tape

    def __exit__(self, *exc):
        global _recording
        _recording = self._prev
        return False


def _finite(arr) -> bool:
    # A single reduce; any nan/inf poisons the sum.
    return math.isfinite(float(arr.sum()))


def backward(loss: Tensor, params: Mapping[str, Tensor] | None = None, tape: Tape | None = None) -> GradientSet:
    """Gradients of a scalar loss node with respect to tracked parameters.

    Every recorded node is visited exactly once in reverse topological
    order (a recorded tape may carry extra nodes; they are skipped). A
    non-finite cotangent aborts with the identity of the node it
    appeared at. Returns {name: gradient} for `params`, zeros for
    parameters the loss does not depend on; with params=None the
    gradients stay on the Tensors' .grad attributes.
    """
    if loss.value.shape != ():
        raise ShapeError(f"backward: loss node must be scalar, got shape {loss.value.shape}")
    nodes = tape.nodes if tape is not None else _topo_order(loss)
    for n in nodes:
        n.grad = None
    if params is not None:
        # recorded tapes hold op nodes only; reset the leaves as well
        for t in params.values():
            t.grad = None
    loss.grad = np.ones(())
    for node in reversed(nodes):
        if node.grad is None or node._push is None or not node.requires_grad:
            continue
        if not _finite(node.grad):
            raise NumericError(f"backward: non-finite gradient at node {node.ident()}")
        node._push(node.grad)
    if params is None:
        return {}
    out: GradientSet = {}
    for name, t in params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.value)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"backward: non-finite gradient for parameter {name}")
        out[name] = g
    return out


def finite_diff_check(
    arrays: Mapping[str, np.ndarray],
    loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
    h: float = 1e-5,
    *,
    min_coords: int = 200,
    seed: int = 0,
    exclude: Callable[[str, int], bool] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn` maps a dict of parameter Tensors to a scalar Tensor and must
    be deterministic given the parameter values (freeze any noise before
    calling). Coordinates are sampled so that every parameter matrix
    contributes at least one and the total is at least `min_coords`;
    `exclude(name, flat_index)` can drop coordinates where the loss is
    not differentiable. Relative error is |analytic - fd| / max(1, |analytic|).
    """
    if h <= 0:
        raise ShapeError("finite_diff_check: h must be positive")
    base = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
    tensors = {k: parameter(v, name=k) for k, v in base.items()}
    loss = loss_fn(tensors)
    analytic = backward(loss, tensors)

    def value_at(current: Mapping[str, np.ndarray]) -> float:
        return float(loss_fn({k: constant(v) for k, v in current.items()}).value)

    rng = np.random.Generator(np.random.Philox(key=[seed, 0xFD]))
    total_size = sum(v.size for v in base.values())
    picks: list[tuple[str, int]] = []
    budget = max(min_coords, len(base))
    for name, v in base.items():
        want = max(1, int(round(budget * v.size / total_size)))
        want = min(want, v.size)
        idx = rng.choice(v.size, size=want, replace=False)
        picks.extend((name, int(i)) for i in idx)
    if exclude is not None:
        picks = [(n, i) for n, i in picks if not exclude(n, i)]

    worst = 0.0
    work = {k: v.copy() for k, v in base.items()}
    for name, i in picks:
        flat = work[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up = value_at(work)
        flat[i] = orig - h
        down = value_at(work)
        flat[i] = orig
        fd = (up - down) / (2.0 * h)
        a = float(analytic[name].reshape(-1)[i])
        err = abs(a - fd) / max(1.0, abs(a))
        if err > worst:
            worst = err
    return worst
