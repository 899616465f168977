"""Dense 2-D float64 tensors with reverse-mode gradients.

Forward arithmetic is plain numpy. Every operation whose inputs carry
gradient registers a backward closure on the output node; ``backward``
replays the graph in reverse topological order and accumulates exact
derivatives into the leaf parameters. Values are checked for finiteness
on every node construction, so numerical blow-ups surface at the op that
produced them instead of corrupting downstream state.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ShapeError


class Tensor:
    """A 2-D float64 value node in the computation graph.

    The shape is fixed per instance; values may be mutated in place by
    the optimizer (leaves only). ``grad`` stays ``None`` until a backward
    pass deposits into it.
    """

    __slots__ = ("value", "parents", "grad", "requires_grad", "_backward")

    def __init__(self, value, parents: tuple = (), requires_grad: bool = False):
        arr = np.ascontiguousarray(value, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericError("non-finite value")
        self.value = arr
        self.parents = tuple(parents)
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.grad: np.ndarray | None = None
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor{self.shape}"


class Param(Tensor):
    """A named trainable leaf. Gradients persist across backward calls
    until ``zero_grad``."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, {self.shape})"


def constant(value) -> Tensor:
    return Tensor(np.atleast_2d(np.asarray(value, dtype=np.float64)))


def column(values) -> Tensor:
    """Constant column vector of shape (n, 1)."""
    return Tensor(np.asarray(values, dtype=np.float64).reshape(-1, 1))


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} shapes {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul shapes {a.shape} x {b.shape}")
    out = Tensor(a.value @ b.value, (a, b))
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(g @ b.value.T)
            if b.requires_grad:
                b.accumulate(a.value.T @ g)
        out._backward = bw
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out = Tensor(a.value + b.value, (a, b))
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(g)
        out._backward = bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    out = Tensor(a.value - b.value, (a, b))
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(-g)
        out._backward = bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise product of same-shape tensors."""
    _same_shape(a, b, "mul")
    out = Tensor(a.value * b.value, (a, b))
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(g * b.value)
            if b.requires_grad:
                b.accumulate(g * a.value)
        out._backward = bw
    return out


def scale(x: Tensor, k: float) -> Tensor:
    out = Tensor(x.value * k, (x,))
    if out.requires_grad:
        def bw(g):
            x.accumulate(g * k)
        out._backward = bw
    return out


def scale_rows(x: Tensor, c: Tensor) -> Tensor:
    """Multiply row i of x by c[i, 0]; c has shape (rows, 1)."""
    if c.shape != (x.rows, 1):
        raise ShapeError(f"scale_rows column {c.shape} for {x.shape}")
    out = Tensor(x.value * c.value, (x, c))
    if out.requires_grad:
        def bw(g):
            if x.requires_grad:
                x.accumulate(g * c.value)
            if c.requires_grad:
                c.accumulate((g * x.value).sum(axis=1, keepdims=True))
        out._backward = bw
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_rows needs at least one tensor")
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise ShapeError(f"concat_rows column mismatch {p.shape} vs (*, {cols})")
    out = Tensor(np.vstack([p.value for p in parts]), tuple(parts))
    if out.requires_grad:
        def bw(g):
            ofs = 0
            for p in parts:
                if p.requires_grad:
                    p.accumulate(g[ofs:ofs + p.rows])
                ofs += p.rows
        out._backward = bw
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ShapeError(f"concat_cols row mismatch {p.shape} vs ({rows}, *)")
    out = Tensor(np.hstack([p.value for p in parts]), tuple(parts))
    if out.requires_grad:
        def bw(g):
            ofs = 0
            for p in parts:
                if p.requires_grad:
                    p.accumulate(g[:, ofs:ofs + p.cols])
                ofs += p.cols
        out._backward = bw
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(x.value[:, start:stop], (x,))
    if out.requires_grad:
        def bw(g):
            gx = np.zeros_like(x.value)
            gx[:, start:stop] = g
            x.accumulate(gx)
        out._backward = bw
    return out


def gather_rows(x: Tensor, index) -> Tensor:
    """Select rows by integer index; repeated indices are allowed and
    their gradients sum."""
    idx = np.asarray(index, dtype=np.intp).reshape(-1)
    out = Tensor(x.value[idx], (x,))
    if out.requires_grad:
        def bw(g):
            gx = np.zeros_like(x.value)
            np.add.at(gx, idx, g)
            x.accumulate(gx)
        out._backward = bw
    return out


def segment_sum(x: Tensor, row_index, segment_index, num_segments: int) -> Tensor:
    """Scatter-sum gathered rows of x into segments.

    out[s] = sum of x[row_index[k]] over all k with segment_index[k] == s.
    Segments with no entries come out as zero rows.
    """
    rows = np.asarray(row_index, dtype=np.intp).reshape(-1)
    segs = np.asarray(segment_index, dtype=np.intp).reshape(-1)
    if rows.shape != segs.shape:
        raise ShapeError(f"segment_sum index lengths {rows.shape} vs {segs.shape}")
    val = np.zeros((num_segments, x.cols))
    np.add.at(val, segs, x.value[rows])
    out = Tensor(val, (x,))
    if out.requires_grad:
        def bw(g):
            gx = np.zeros_like(x.value)
            np.add.at(gx, rows, g[segs])
            x.accumulate(gx)
        out._backward = bw
    return out


def sum_rows(x: Tensor) -> Tensor:
    """Sum over rows, returning a (1, cols) tensor."""
    out = Tensor(x.value.sum(axis=0, keepdims=True), (x,))
    if out.requires_grad:
        def bw(g):
            x.accumulate(np.broadcast_to(g, x.shape))
        out._backward = bw
    return out


def mean_rows(x: Tensor) -> Tensor:
    n = x.rows
    out = Tensor(x.value.mean(axis=0, keepdims=True), (x,))
    if out.requires_grad:
        def bw(g):
            x.accumulate(np.broadcast_to(g / n, x.shape))
        out._backward = bw
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.array([[x.value.sum()]]), (x,))
    if out.requires_grad:
        def bw(g):
            x.accumulate(np.full(x.shape, g[0, 0]))
        out._backward = bw
    return out


def repeat_rows(x: Tensor, n: int) -> Tensor:
    """Tile a (1, d) row n times; gradients sum back over the copies."""
    if x.rows != 1:
        raise ShapeError(f"repeat_rows wants a single row, got {x.shape}")
    out = Tensor(np.repeat(x.value, n, axis=0), (x,))
    if out.requires_grad:
        def bw(g):
            x.accumulate(g.sum(axis=0, keepdims=True))
        out._backward = bw
    return out


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    """Per-row dot product, returning a (rows, 1) column."""
    _same_shape(a, b, "rowdot")
    out = Tensor((a.value * b.value).sum(axis=1, keepdims=True), (a, b))
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(g * b.value)
            if b.requires_grad:
                b.accumulate(g * a.value)
        out._backward = bw
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """y = x for x > 0, slope * x otherwise. The subgradient at exactly 0
    is taken to be slope."""
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky slope must be in [0, 1), got {slope}")
    factor = np.where(x.value > 0.0, 1.0, slope)
    out = Tensor(x.value * factor, (x,))
    if out.requires_grad:
        def bw(g):
            x.accumulate(g * factor)
        out._backward = bw
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction for stability."""
    if x.cols < 1:
        raise ShapeError("softmax needs at least one column")
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s, (x,))
    if out.requires_grad:
        def bw(g):
            x.accumulate((g - (g * s).sum(axis=1, keepdims=True)) * s)
        out._backward = bw
    return out


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Divide each row by max(its L2 norm, eps); zero rows stay zero."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    with np.errstate(over="ignore"):
        norms = np.sqrt((x.value ** 2).sum(axis=1, keepdims=True))
    if not np.isfinite(norms).all():
        raise NumericError("row norm overflow")
    denom = np.maximum(norms, eps)
    y = x.value / denom
    out = Tensor(y, (x,))
    if out.requires_grad:
        live = norms > eps
        def bw(g):
            dot = (g * y).sum(axis=1, keepdims=True)
            x.accumulate(np.where(live, (g - y * dot) / denom, g / eps))
        out._backward = bw
    return out


def log_sigmoid(x: Tensor) -> Tensor:
    out = Tensor(-np.logaddexp(0.0, -x.value), (x,))
    if out.requires_grad:
        # d/dx log(sigmoid(x)) = sigmoid(-x), computed stably
        v = x.value
        sig_neg = np.where(v >= 0.0,
                           np.exp(-np.maximum(v, 0.0)) / (1.0 + np.exp(-np.abs(v))),
                           1.0 / (1.0 + np.exp(np.minimum(v, 0.0))))
        def bw(g):
            x.accumulate(g * sig_neg)
        out._backward = bw
    return out


def dropout_mask(shape: tuple[int, int], rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted-dropout keep mask: entries are 0 or 1/(1-rate). Apply with
    mul() at train time only; evaluation skips the mask entirely."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return Tensor(np.ones(shape))
    keep = (rng.random(shape) >= rate).astype(np.float64)
    return Tensor(keep / (1.0 - rate))


# ---------------------------------------------------------------------------
# reverse pass


def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of every parameter reachable from a scalar loss.

    Repeated calls without zeroing accumulate, which is what mini-batch
    gradient accumulation wants.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a (1, 1) scalar root, got {loss.shape}")
    order = _topo(loss)
    loss.accumulate(np.ones((1, 1)))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def finite_difference_check(forward_fn: Callable[[], Tensor],
                            params: Sequence[Param],
                            step: float = 1e-5) -> dict[str, float]:
    """Compare analytic gradients against central differences.

    forward_fn must be a deterministic closure over the given params and
    return the scalar loss. Returns the max relative error per parameter,
    with relative error |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
    """
    for p in params:
        p.zero_grad()
    backward(forward_fn())
    analytic = {p.name: p.grad.copy() for p in params}

    report: dict[str, float] = {}
    for p in params:
        numeric = np.zeros_like(p.value)
        for ij in np.ndindex(*p.value.shape):
            orig = p.value[ij]
            p.value[ij] = orig + step
            hi = float(forward_fn().value[0, 0])
            p.value[ij] = orig - step
            lo = float(forward_fn().value[0, 0])
            p.value[ij] = orig
            numeric[ij] = (hi - lo) / (2.0 * step)
        ga = analytic[p.name]
        rel = np.abs(ga - numeric) / np.maximum(1e-8, np.abs(ga) + np.abs(numeric))
        report[p.name] = float(rel.max())
    return report
