"""Small reverse-mode differentiation tape over dense float64 matrices.

Only the operations the model needs are provided. Every op returns a new
:class:`Value` whose ``_backward`` closure maps the upstream gradient to the
gradients of its parents.
"""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "NumericError",
    "Value",
    "EdgeIndex",
    "constant",
    "parameter",
    "matmul",
    "spmatmul",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "add_rowvec",
    "elu",
    "leaky_relu",
    "relu",
    "sigmoid",
    "log_sigmoid",
    "exp",
    "absolute",
    "square",
    "concat_cols",
    "mean_over_group",
    "sum_all",
    "gather_rows",
    "segment_softmax",
    "segment_weighted_sum",
    "grad_reverse",
    "check_gradients",
    "stable_sigmoid",
]

_ids = itertools.count()


class NumericError(ArithmeticError):
    """Raised when an op produces NaN or Inf."""

    def __init__(self, op, message="non-finite output"):
        super().__init__(f"{op}: {message}")
        self.op = op


class Value:
    """A node on the tape: a 2-D float64 payload plus its gradient accumulator."""

    __slots__ = ("id", "data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, parents=(), backward=None, op="leaf", requires_grad=False):
        self.op = op
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise ValueError(f"Value payload must be at most 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericError(op)
        self.id = next(_ids)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError("item() requires a 1x1 value")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Value(op={self.op!r}, shape={self.data.shape})"

    def backward(self, upstream=None):
        """Accumulate d(self)/d(node) into ``node.grad`` for every reachable node.

        Gradients are propagated in a private buffer and added to ``.grad`` at
        the end, so calling ``backward`` twice adds each contribution exactly
        twice.
        """
        if upstream is None:
            if self.data.size != 1:
                raise ValueError("backward() without upstream requires a scalar")
            upstream = np.ones_like(self.data)
        order = _topological_order(self)
        local = {self.id: np.asarray(upstream, dtype=np.float64)}
        for node in reversed(order):
            g = local.pop(node.id, None)
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.id in local:
                    local[parent.id] = local[parent.id] + pg
                else:
                    local[parent.id] = pg


def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.id not in seen:
                stack.append((p, False))
    return order


def constant(data):
    return Value(data)


def parameter(data):
    return Value(data, requires_grad=True)


def _as_value(x):
    return x if isinstance(x, Value) else Value(x)


def _make(data, parents, backward, op):
    # Value.__init__ performs the finiteness check and names the op
    return Value(data, parents, backward, op)


# ---------------------------------------------------------------------------
# dense algebra


def matmul(a, b):
    a, b = _as_value(a), _as_value(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dimensions differ {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        return g @ B.T, A.T @ g

    return _make(A @ B, (a, b), backward, "matmul")


def spmatmul(x, w):
    """Constant sparse (or dense) matrix ``x`` times a Value ``w``."""
    w = _as_value(w)
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"spmatmul: inner dimensions differ {x.shape} @ {w.shape}")
    xt = x.T.tocsr() if sp.issparse(x) else np.asarray(x).T
    out = np.asarray(x @ w.data)

    def backward(g):
        return (np.asarray(xt @ g),)

    return _make(out, (w,), backward, "spmatmul")


def _check_same(op, a, b):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b):
    a, b = _as_value(a), _as_value(b)
    _check_same("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    a, b = _as_value(a), _as_value(b)
    _check_same("sub", a, b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    a, b = _as_value(a), _as_value(b)
    _check_same("mul", a, b)
    A, B = a.data, b.data
    return _make(A * B, (a, b), lambda g: (g * B, g * A), "mul")


def scale(a, c):
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a):
    return scale(a, -1.0)


def add_rowvec(a, b):
    """``a`` (n, m) plus a (1, m) row broadcast over rows (bias add)."""
    if b.shape != (1, a.shape[1]):
        raise ValueError(f"add_rowvec: expected (1, {a.shape[1]}), got {b.shape}")
    return _make(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)), "add_rowvec")


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def elu(a, alpha=1.0):
    x = a.data
    neg_part = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg_part)
    deriv = np.where(x > 0, 1.0, neg_part + alpha)
    return _make(out, (a,), lambda g: (g * deriv,), "elu")


def leaky_relu(a, slope=0.2):
    x = a.data
    deriv = np.where(x > 0, 1.0, slope)
    return _make(x * deriv, (a,), lambda g: (g * deriv,), "leaky_relu")


def relu(a):
    x = a.data
    mask = (x > 0).astype(np.float64)
    return _make(x * mask, (a,), lambda g: (g * mask,), "relu")


def stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    s = stable_sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def log_sigmoid(a):
    # log σ(x) = min(x, 0) - log1p(exp(-|x|))
    x = a.data
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    deriv = stable_sigmoid(-x)
    return _make(out, (a,), lambda g: (g * deriv,), "log_sigmoid")


def exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def absolute(a):
    x = a.data
    sign = np.sign(x)
    return _make(np.abs(x), (a,), lambda g: (g * sign,), "abs")


def square(a):
    x = a.data
    return _make(x * x, (a,), lambda g: (2.0 * g * x,), "square")


# ---------------------------------------------------------------------------
# structural ops


def concat_cols(values: Sequence[Value]):
    values = [_as_value(v) for v in values]
    rows = {v.shape[0] for v in values}
    if len(rows) != 1:
        raise ValueError(f"concat_cols: row counts differ {sorted(rows)}")
    bounds = np.cumsum([0] + [v.shape[1] for v in values])

    def backward(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _make(np.concatenate([v.data for v in values], axis=1), values, backward, "concat_cols")


def mean_over_group(values: Sequence[Value]):
    """Elementwise mean of equally shaped values (e.g. over attention heads)."""
    values = [_as_value(v) for v in values]
    for v in values[1:]:
        _check_same("mean_over_group", values[0], v)
    k = len(values)
    out = sum(v.data for v in values) / k
    return _make(out, values, lambda g: tuple(g / k for _ in values), "mean_over_group")


def sum_all(a, weights=None):
    """Scalar sum of ``a``, optionally weighted elementwise by a constant array."""
    if weights is None:
        w = np.ones_like(a.data)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        w = np.broadcast_to(w, a.shape)
    total = float(np.sum(a.data * w))
    return _make(np.array([[total]]), (a,), lambda g: (g[0, 0] * w,), "sum")


def gather_rows(h, idx):
    idx = np.asarray(idx, dtype=np.int64)
    n = h.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index out of range for {n} rows")

    def backward(g):
        out = np.zeros_like(h.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(h.data[idx], (h,), backward, "gather_rows")


class EdgeIndex:
    """Directed slots (dst <- src) grouped by destination, CSR style.

    ``offsets[i]:offsets[i+1]`` is the slot range of node ``i``. Every node has
    a self-slot so no segment is empty.
    """

    def __init__(self, n, src, dst):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        order = np.lexsort((src, dst))
        self.n = int(n)
        self.src = src[order]
        self.dst = dst[order]
        counts = np.bincount(self.dst, minlength=self.n)
        if np.any(counts == 0):
            raise ValueError("EdgeIndex: every node needs at least one slot (self-slot)")
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self._keys = self.dst * self.n + self.src
        if np.any(np.diff(self._keys) == 0):
            raise ValueError("EdgeIndex: duplicate directed slot")

    @classmethod
    def from_undirected(cls, n, pairs):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        loops = np.arange(n, dtype=np.int64)
        src = np.concatenate([pairs[:, 1], pairs[:, 0], loops])
        dst = np.concatenate([pairs[:, 0], pairs[:, 1], loops])
        return cls(n, src, dst)

    @property
    def num_slots(self):
        return len(self.src)

    def slots(self, dst, src):
        """Slot positions of the directed pairs ``dst <- src``."""
        keys = np.asarray(dst, dtype=np.int64) * self.n + np.asarray(src, dtype=np.int64)
        pos = np.searchsorted(self._keys, keys)
        if np.any(pos >= len(self._keys)) or np.any(self._keys[np.minimum(pos, len(self._keys) - 1)] != keys):
            raise KeyError("EdgeIndex: requested slot does not exist")
        return pos


def segment_softmax(logits, edges: EdgeIndex):
    """Softmax of each column of ``logits`` within every destination segment."""
    if logits.shape[0] != edges.num_slots:
        raise ValueError(f"segment_softmax: {logits.shape[0]} logits for {edges.num_slots} slots")
    starts = edges.offsets[:-1]
    x = logits.data
    seg_max = np.maximum.reduceat(x, starts, axis=0)
    ex = np.exp(x - seg_max[edges.dst])
    denom = np.add.reduceat(ex, starts, axis=0)
    y = ex / denom[edges.dst]

    def backward(g):
        inner = np.add.reduceat(g * y, starts, axis=0)
        return (y * (g - inner[edges.dst]),)

    return _make(y, (logits,), backward, "segment_softmax")


def segment_weighted_sum(weights, messages, edges: EdgeIndex):
    """Row ``i`` of the output is the weighted sum of messages on slots into ``i``.

    ``weights`` is (slots, K) and ``messages`` (slots, K*d): column ``k`` of the
    weights scales the ``k``-th block of ``d`` message columns.
    """
    S = edges.num_slots
    if weights.shape[0] != S or messages.shape[0] != S:
        raise ValueError("segment_weighted_sum: one weight row and one message row per slot")
    k = weights.shape[1]
    if messages.shape[1] % k:
        raise ValueError("segment_weighted_sum: message width not divisible by head count")
    d = messages.shape[1] // k
    W, M = weights.data, messages.data
    wrep = np.repeat(W, d, axis=1)
    starts = edges.offsets[:-1]
    out = np.add.reduceat(wrep * M, starts, axis=0)

    def backward(g):
        gs = g[edges.dst]
        gw = (gs * M).reshape(S, k, d).sum(axis=2)
        return gw, gs * wrep

    return _make(out, (weights, messages), backward, "segment_weighted_sum")


def grad_reverse(x, lam):
    """Identity forward; multiplies the upstream gradient by ``-lam`` backward."""
    lam = float(lam)
    if lam < 0:
        raise ValueError("grad_reverse: lambda must be >= 0")
    return Value(x.data, (x,), lambda g: (-lam * g,), "grad_reverse")


# ---------------------------------------------------------------------------
# finite-difference verification


def gradient_errors(
    loss_fn: Callable[[dict], Value],
    params: dict,
    eps: float = 1e-5,
    names: Sequence[str] | None = None,
    floor: float = 1e-7,
    kink_curvature: float | None = None,
):
    """Central-difference comparison; returns ``(worst, checked, kinks)``.

    ``worst`` is the largest ``|g - fd| / max(|g|, |fd|)``; entries whose
    absolute disagreement is at most ``floor`` count as exact. With
    ``kink_curvature`` set, an entry whose second difference
    ``|f(+eps) - 2 f(0) + f(-eps)| / eps**2`` exceeds it is taken to straddle
    a ReLU-type corner: it is counted in ``kinks`` and left out of ``worst``.
    The second difference never looks at the tape gradient, so a wrong
    gradient cannot hide there.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    names = list(params) if names is None else list(names)
    leaves = {k: parameter(v) for k, v in params.items()}
    loss = loss_fn(leaves)
    f0 = loss.item()
    if not np.isfinite(f0):
        raise NumericError("check_gradients", "non-finite loss")
    loss.backward()

    def evaluate():
        return loss_fn({k: parameter(v) for k, v in params.items()}).item()

    worst, checked, kinks = 0.0, 0, 0
    for name in names:
        arr = params[name]
        grad = leaves[name].grad
        if grad is None:
            grad = np.zeros_like(leaves[name].data)
        grad = grad.reshape(-1)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = evaluate()
            flat[i] = orig - eps
            f_minus = evaluate()
            flat[i] = orig
            if kink_curvature is not None and abs(f_plus - 2.0 * f0 + f_minus) > kink_curvature * eps * eps:
                kinks += 1
                continue
            checked += 1
            fd = (f_plus - f_minus) / (2.0 * eps)
            diff = abs(grad[i] - fd)
            if diff > floor:
                worst = max(worst, diff / max(abs(grad[i]), abs(fd)))
    return worst, checked, kinks


def check_gradients(
    loss_fn: Callable[[dict], Value],
    params: dict,
    eps: float = 1e-5,
    names: Sequence[str] | None = None,
    floor: float = 1e-7,
):
    """Compare tape gradients with central differences for every entry.

    ``loss_fn`` maps a dict of leaf Values to a scalar Value; ``params`` maps
    names to float64 arrays. Returns the worst relative error
    ``|g - fd| / max(|g|, |fd|)`` over the checked entries; entries whose
    absolute disagreement is at most ``floor`` count as exact.
    """
    return gradient_errors(loss_fn, params, eps, names, floor)[0]
