"""Reverse-mode automatic differentiation over dense float64 tensors.

Provides exactly the operations the segmentation model needs: matrix
products, elementwise gate arithmetic, row gathering and block reshuffling
for batched recurrent steps, softmax, and negative log-likelihood.  Values
are C-contiguous float64 numpy arrays.  Every operation appends a node with
a local backward rule to an implicit tape (the graph of parent references),
which is rebuilt from scratch for each minibatch; node values are never
mutated after creation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

# Probabilities below this floor are clamped before taking logs so that a
# rare early-training underflow cannot abort a run.
PROB_FLOOR = 1e-12


class DimensionError(ValueError):
    """Operand shapes violate an operation's contract."""


@dataclass
class Diagnostics:
    """Counters for numeric events worth surfacing but not fatal."""

    prob_floor_hits: int = 0

    def reset(self) -> None:
        self.prob_floor_hits = 0


diagnostics = Diagnostics()


def tensor(values, shape: Sequence[int] | None = None) -> Array:
    """Return `values` as a C-contiguous (row-major) float64 array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


class Node:
    """One value in the computation graph.

    `parents` are the input nodes; `_backward(grad)` returns one gradient
    array per parent (None for a parent that receives nothing).  `grad` is
    populated by `backward` and always matches the value's shape.
    """

    __slots__ = ("value", "op", "parents", "grad", "name", "_backward", "aux")

    def __init__(
        self,
        value: Array,
        op: str = "leaf",
        parents: tuple["Node", ...] = (),
        backward: Callable[[Array], tuple[Array | None, ...]] | None = None,
        name: str | None = None,
    ):
        self.value = value
        self.op = op
        self.parents = parents
        self._backward = backward
        self.grad: Array | None = None
        self.name = name
        self.aux = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"<Node {self.op} shape={self.shape}{tag}>"


def param(name: str, values) -> Node:
    """A named trainable leaf; its gradient lands in the GradStore."""
    return Node(tensor(values), op="param", name=name)


def constant(values) -> Node:
    """An unnamed leaf that still receives a gradient but is not trained."""
    return Node(tensor(values), op="const")


class GradStore(dict):
    """Mapping from parameter name to accumulated gradient array."""

    def accumulate(self, name: str, grad: Array) -> None:
        if name in self:
            self[name] = self[name] + grad
        else:
            self[name] = grad


def _toposort(root: Node) -> list[Node]:
    """Iterative post-order DFS: every node appears after all its parents."""
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
        for parent in node.parents:
            stack.append((parent, False))
    return order


def backward(loss: Node) -> GradStore:
    """Reverse traversal from a scalar loss; fills `grad` on every reachable
    node and collects parameter gradients into a GradStore."""
    if loss.value.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _toposort(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None or node._backward is None:
            continue
        for parent, g in zip(node.parents, node._backward(node.grad)):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad += g
    store = GradStore()
    for node in order:
        if node.grad is None:
            node.grad = np.zeros_like(node.value)
        if node.op == "param" and node.name is not None:
            store.accumulate(node.name, node.grad)
    return store


# ---------------------------------------------------------------------------
# core operations


def matmul(a: Node, b: Node) -> Node:
    """Matrix product; backward dA = dC @ B^T, dB = A^T @ dC."""
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value
    out = av @ bv

    def bw(g: Array):
        return g @ bv.T, av.T @ g

    return Node(out, "matmul", (a, b), bw)


def add(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise DimensionError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return Node(a.value + b.value, "add", (a, b), lambda g: (g, g))


def hadamard(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise DimensionError(f"hadamard: shape mismatch {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    return Node(av * bv, "hadamard", (a, b), lambda g: (g * bv, g * av))


def tanh(x: Node) -> Node:
    out = np.tanh(x.value)
    return Node(out, "tanh", (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Node) -> Node:
    out = _sigmoid(x.value)
    return Node(out, "sigmoid", (x,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(v: Array) -> Array:
    # Branch on sign so exp never overflows.
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def elementwise(kind: str, x: Node, y: Node | None = None) -> Node:
    """Dispatch by kind: binary {add, hadamard} need y, unary {tanh, sigmoid}
    forbid it."""
    if kind == "add":
        if y is None:
            raise DimensionError("elementwise add needs two operands")
        return add(x, y)
    if kind == "hadamard":
        if y is None:
            raise DimensionError("elementwise hadamard needs two operands")
        return hadamard(x, y)
    if kind in ("tanh", "sigmoid"):
        if y is not None:
            raise DimensionError(f"elementwise {kind} takes one operand")
        return tanh(x) if kind == "tanh" else sigmoid(x)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def one_minus(x: Node) -> Node:
    """1 - x, the complement used for recurrent gate mixing."""
    return Node(1.0 - x.value, "one_minus", (x,), lambda g: (-g,))


def add_row(x: Node, row: Node) -> Node:
    """[m,n] + [1,n] broadcast over rows (bias addition)."""
    if x.value.ndim != 2 or row.shape != (1, x.shape[1]):
        raise DimensionError(f"add_row: got {x.shape} and {row.shape}")
    return Node(
        x.value + row.value,
        "add_row",
        (x, row),
        lambda g: (g, g.sum(axis=0, keepdims=True)),
    )


def scale_rows(x: Node, s: Node) -> Node:
    """Multiply row i of [m,n] by scalar s[i] from [m,1]."""
    if x.value.ndim != 2 or s.shape != (x.shape[0], 1):
        raise DimensionError(f"scale_rows: got {x.shape} and {s.shape}")
    xv, sv = x.value, s.value
    return Node(
        xv * sv,
        "scale_rows",
        (x, s),
        lambda g: (g * sv, (g * xv).sum(axis=1, keepdims=True)),
    )


def concat_cols(parts: Sequence[Node]) -> Node:
    """Horizontal concatenation of [m, n_i] blocks."""
    parts = tuple(parts)
    rows_ = parts[0].shape[0]
    if any(p.value.ndim != 2 or p.shape[0] != rows_ for p in parts):
        raise DimensionError(
            f"concat_cols: row counts differ: {[p.shape for p in parts]}"
        )
    widths = [p.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def bw(g: Array):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=1))

    return Node(np.concatenate([p.value for p in parts], axis=1), "concat_cols", parts, bw)


def concat_rows(parts: Sequence[Node]) -> Node:
    """Vertical concatenation of [m_i, n] blocks."""
    parts = tuple(parts)
    cols = parts[0].shape[1]
    if any(p.value.ndim != 2 or p.shape[1] != cols for p in parts):
        raise DimensionError(
            f"concat_rows: column counts differ: {[p.shape for p in parts]}"
        )
    heights = [p.shape[0] for p in parts]
    splits = np.cumsum(heights)[:-1]

    def bw(g: Array):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=0))

    return Node(np.concatenate([p.value for p in parts], axis=0), "concat_rows", parts, bw)


def rows(table: Node, indices) -> Node:
    """Gather rows of a [v, d] table; gradients scatter-add back."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.value.ndim != 2 or idx.ndim != 1:
        raise DimensionError(f"rows: table {table.shape}, indices {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"rows: index out of range for table with {table.shape[0]} rows")
    tv = table.value

    def bw(g: Array):
        gt = np.zeros_like(tv)
        np.add.at(gt, idx, g)
        return (gt,)

    return Node(np.ascontiguousarray(tv[idx]), "rows", (table,), bw)


def row_range(x: Node, start: int, stop: int) -> Node:
    """Contiguous row slice [start:stop]."""
    if x.value.ndim != 2 or not (0 <= start <= stop <= x.shape[0]):
        raise DimensionError(f"row_range: [{start}:{stop}] of {x.shape}")
    xv = x.value

    def bw(g: Array):
        gx = np.zeros_like(xv)
        gx[start:stop] = g
        return (gx,)

    return Node(np.ascontiguousarray(xv[start:stop]), "row_range", (x,), bw)


def tile_rows(x: Node, k: int) -> Node:
    """Stack k copies of [m, n] into [k*m, n]; backward sums the copies."""
    if x.value.ndim != 2 or k < 1:
        raise DimensionError(f"tile_rows: shape {x.shape}, k={k}")
    m, n = x.shape

    def bw(g: Array):
        return (g.reshape(k, m, n).sum(axis=0),)

    return Node(np.tile(x.value, (k, 1)), "tile_rows", (x,), bw)


def sum_blocks(x: Node, k: int) -> Node:
    """Sum k stacked [m, n] blocks of [k*m, n] back into [m, n]."""
    if x.value.ndim != 2 or k < 1 or x.shape[0] % k != 0:
        raise DimensionError(f"sum_blocks: shape {x.shape} not divisible into k={k}")
    m = x.shape[0] // k
    n = x.shape[1]

    def bw(g: Array):
        return (np.tile(g, (k, 1)),)

    return Node(x.value.reshape(k, m, n).sum(axis=0), "sum_blocks", (x,), bw)


def transpose(x: Node) -> Node:
    if x.value.ndim != 2:
        raise DimensionError(f"transpose: need 2-d, got {x.shape}")
    return Node(
        np.ascontiguousarray(x.value.T),
        "transpose",
        (x,),
        lambda g: (np.ascontiguousarray(g.T),),
    )


def reshape(x: Node, shape: Sequence[int]) -> Node:
    shape = tuple(shape)
    orig = x.shape
    return Node(
        np.ascontiguousarray(x.value.reshape(shape)),
        "reshape",
        (x,),
        lambda g: (np.ascontiguousarray(g.reshape(orig)),),
    )


def sum_all(x: Node) -> Node:
    """Sum of all entries as a scalar node."""
    xv = x.value
    return Node(
        tensor(xv.sum(), shape=()),
        "sum_all",
        (x,),
        lambda g: (np.full_like(xv, float(g)),),
    )


# ---------------------------------------------------------------------------
# probability operations


def softmax(x: Node, mask: Array | None = None) -> Node:
    """Stable softmax over a vector, or over each row of a matrix.

    `mask` (same shape, nonzero = keep) restricts the distribution to the
    unmasked entries; masked entries come out exactly 0.  A row with nothing
    unmasked is an error.
    """
    if x.value.size == 0:
        raise DimensionError("softmax: empty input")
    vec = x.value.ndim == 1
    v = x.value.reshape(1, -1) if vec else x.value
    if v.ndim != 2:
        raise DimensionError(f"softmax: need a vector or matrix, got {x.shape}")
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64).reshape(v.shape)
        if not (m > 0).any(axis=1).all():
            raise DimensionError("softmax: some row has all positions masked")
        shifted = np.where(m > 0, v, -np.inf)
        shifted = shifted - shifted.max(axis=1, keepdims=True)
        e = np.exp(shifted) * (m > 0)
    else:
        e = np.exp(v - v.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    out = p.reshape(x.shape)

    def bw(g: Array):
        g2 = g.reshape(p.shape)
        inner = (g2 * p).sum(axis=1, keepdims=True)
        return ((p * (g2 - inner)).reshape(x.shape),)

    return Node(np.ascontiguousarray(out), "softmax", (x,), bw)


def cross_entropy(dist: Node, target: int) -> Node:
    """-log dist[target] for a probability vector; the gradient flows only
    through the target entry.  Probabilities below PROB_FLOOR are clamped
    and counted in `diagnostics`."""
    if dist.value.ndim != 1:
        raise DimensionError(f"cross_entropy: need a vector, got {dist.shape}")
    n = dist.shape[0]
    if not 0 <= target < n:
        raise IndexError(f"cross_entropy: target {target} out of range [0, {n})")
    p = dist.value[target]
    clamped = max(p, PROB_FLOOR)
    if p < PROB_FLOOR:
        diagnostics.prob_floor_hits += 1

    def bw(g: Array):
        gd = np.zeros_like(dist.value)
        if p >= PROB_FLOOR:
            gd[target] = -float(g) / clamped
        return (gd,)

    return Node(tensor(-np.log(clamped), shape=()), "cross_entropy", (dist,), bw)


def nll_sum(dist: Node, targets, weights=None) -> Node:
    """Batched cross-entropy: sum_i weights[i] * -log dist[i, targets[i]].

    `aux` on the returned node holds the per-row weighted losses so callers
    can inspect per-example contributions without another graph pass.
    """
    if dist.value.ndim != 2:
        raise DimensionError(f"nll_sum: need a matrix, got {dist.shape}")
    b, n = dist.shape
    t = np.asarray(targets, dtype=np.int64)
    if t.shape != (b,):
        raise DimensionError(f"nll_sum: targets shape {t.shape} for batch {b}")
    if t.size and (t.min() < 0 or t.max() >= n):
        raise IndexError(f"nll_sum: target out of range [0, {n})")
    w = np.ones(b) if weights is None else np.asarray(weights, dtype=np.float64)
    picked = dist.value[np.arange(b), t]
    low = picked < PROB_FLOOR
    if low.any():
        diagnostics.prob_floor_hits += int(low.sum())
    clamped = np.maximum(picked, PROB_FLOOR)
    per_row = -np.log(clamped) * w

    def bw(g: Array):
        gd = np.zeros_like(dist.value)
        gd[np.arange(b), t] = np.where(low, 0.0, -w / clamped) * float(g)
        return (gd,)

    node = Node(tensor(per_row.sum(), shape=()), "nll_sum", (dist,), bw)
    node.aux = per_row
    return node


# ---------------------------------------------------------------------------
# gradient checking


def finite_difference_check(
    f: Callable[[dict[str, Array]], Node],
    params: dict[str, Array],
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients of `f(params)` against central differences.

    `f` must build a fresh scalar graph from the given arrays each call,
    binding them as `param(name, arr)` so the GradStore keys line up.
    Returns the worst relative error max|a-n| / max(1e-8, |a|+|n|) over all
    parameter entries; the caller asserts the threshold.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    store = backward(f(params))
    worst = 0.0
    for name, arr in params.items():
        analytic = store.get(name)
        if analytic is None:
            analytic = np.zeros_like(arr)
        flat = arr.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f(params).value)
            flat[i] = orig - eps
            f_minus = float(f(params).value)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(1e-8, abs(aflat[i]) + abs(numeric))
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst
