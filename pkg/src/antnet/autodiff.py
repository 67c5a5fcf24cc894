"""Minimal dense-array reverse-mode autodiff engine.

Values wrap float64 numpy arrays of rank <= 2 and record enough provenance
to run a deterministic backward pass.  The op set is exactly what the
answer-understanding network needs: linear algebra, saturating activations,
softmax, concatenation/stacking, indexing, and dropout.  A central
finite-difference checker doubles as the gradient oracle for every op and
for the full model.
"""

from __future__ import annotations

import contextlib
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Value", "Graph", "ShapeError", "NumericError", "no_grad", "toposort",
    "add", "sub", "neg", "mul", "matmul", "matvec", "dot",
    "tanh", "sigmoid", "log", "reciprocal", "softmax", "log_softmax",
    "concat", "stack", "stack_rows", "transpose", "slice1d", "pick",
    "take", "take_row", "sum_", "mean_", "mean_rows",
    "replicate", "replicate_cols", "tile_row", "dropout",
    "finite_diff_check", "finite_diff_report", "probe_coordinate",
    "GradCheckReport", "zero_grads", "corrupted_backward",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """Raised on non-finite values where finiteness is a precondition."""


_ids = itertools.count()
_GRAD_ENABLED = True
_ACTIVE_GRAPH: "Graph | None" = None
_CORRUPT_TANH = False


class Value:
    """A float64 array node in a dynamically built computation graph.

    `grad` always has the same shape as `data`.  Nodes remember their
    inputs (`parents`) and a backward closure; creation order gives a
    topological order of the graph, which backward() replays in reverse
    so gradient accumulation is bit-for-bit reproducible.
    """

    __slots__ = ("data", "_grad", "requires_grad", "op", "parents", "_backward", "_id")

    def __init__(self, data, requires_grad=False, op="leaf", parents=()):
        if type(data) is np.ndarray and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 2:
            raise ShapeError(f"rank {self.data.ndim} > 2 not supported (shape {self.data.shape})")
        self._grad = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self._backward = None
        self._id = next(_ids)
        g = _ACTIVE_GRAPH
        if g is not None:
            g.nodes.append(self)

    @property
    def grad(self):
        # Allocated on first touch so pure-forward passes stay cheap.
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        g = np.asarray(value, dtype=np.float64)
        if g.shape != self.data.shape:
            raise ShapeError(f"grad shape {g.shape} != data shape {self.data.shape}")
        self._grad = g

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self._grad = None

    def backward(self):
        """Accumulate dself/dnode into .grad for every node reaching self.

        Requires a scalar root.  The root's own grad is set to exactly 1.0.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar root, got shape {self.data.shape}")
        order = toposort(self)
        self.grad[...] = 1.0
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    def __repr__(self):
        return f"Value(op={self.op!r}, shape={self.data.shape}, requires_grad={self.requires_grad})"

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
        return neg(self)


class Graph:
    """Recording context: registry of Values created while active, plus a seed.

    The registry is append-only, so it is topologically ordered by
    construction (inputs exist before the op that consumes them).
    """

    def __init__(self, seed: int = 0):
        self.nodes: list[Value] = []
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self._prev = None

    def __enter__(self):
        global _ACTIVE_GRAPH
        self._prev = _ACTIVE_GRAPH
        _ACTIVE_GRAPH = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_GRAPH
        _ACTIVE_GRAPH = self._prev
        return False

    def is_topologically_ordered(self) -> bool:
        pos = {id(v): i for i, v in enumerate(self.nodes)}
        for i, v in enumerate(self.nodes):
            for p in v.parents:
                if id(p) in pos and pos[id(p)] >= i:
                    return False
        return True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; ops return plain constant Values."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def corrupted_backward():
    """Fault-injection hook: deliberately mis-scale tanh's backward rule.

    Used only as a negative control for the gradient checker.
    """
    global _CORRUPT_TANH
    prev = _CORRUPT_TANH
    _CORRUPT_TANH = True
    try:
        yield
    finally:
        _CORRUPT_TANH = prev


def toposort(root: Value) -> list[Value]:
    """Nodes reaching `root`, ordered by creation id (a topological order)."""
    seen = {id(root)}
    stack = [root]
    nodes = [root]
    while stack:
        v = stack.pop()
        for p in v.parents:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append(p)
                nodes.append(p)
    nodes.sort(key=lambda v: v._id)
    return nodes


def zero_grads(values) -> None:
    for v in values:
        v.zero_grad()


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _needs_grad(*vals: Value) -> bool:
    return _GRAD_ENABLED and any(v.requires_grad for v in vals)


def _out(data, op, *parents: Value) -> Value:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Value(data, requires_grad=True, op=op, parents=parents)
    return Value(data, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    out = _out(a.data + b.data, "add", a, b)
    if out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                a.grad += _unbroadcast(g, a.data.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(g, b.data.shape)
        out._backward = backward
    return out


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    out = _out(a.data - b.data, "sub", a, b)
    if out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                a.grad += _unbroadcast(g, a.data.shape)
            if b.requires_grad:
                b.grad -= _unbroadcast(g, b.data.shape)
        out._backward = backward
    return out


def neg(a) -> Value:
    a = as_value(a)
    out = _out(-a.data, "neg", a)
    if out.requires_grad:
        def backward():
            a.grad -= out.grad
        out._backward = backward
    return out


def mul(a, b) -> Value:
    """Elementwise product with numpy broadcasting."""
    a, b = as_value(a), as_value(b)
    out = _out(a.data * b.data, "mul", a, b)
    if out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                a.grad += _unbroadcast(g * b.data, a.data.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(g * a.data, b.data.shape)
        out._backward = backward
    return out


def matmul(a, b) -> Value:
    """Matrix product of two rank-2 Values."""
    a, b = as_value(a), as_value(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul expects (m,k)@(k,n), got {a.data.shape} @ {b.data.shape}")
    out = _out(a.data @ b.data, "matmul", a, b)
    if out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                a.grad += g @ b.data.T
            if b.requires_grad:
                b.grad += a.data.T @ g
        out._backward = backward
    return out


def matvec(a, x) -> Value:
    """Matrix-vector product: (m,k) @ (k,) -> (m,)."""
    a, x = as_value(a), as_value(x)
    if a.data.ndim != 2 or x.data.ndim != 1 or a.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"matvec expects (m,k)@(k,), got {a.data.shape} @ {x.data.shape}")
    out = _out(a.data @ x.data, "matvec", a, x)
    if out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                a.grad += np.outer(g, x.data)
            if x.requires_grad:
                x.grad += a.data.T @ g
        out._backward = backward
    return out


def dot(x, y) -> Value:
    """Inner product of two equal-length vectors, returning a scalar."""
    x, y = as_value(x), as_value(y)
    if x.data.shape != y.data.shape or x.data.ndim != 1:
        raise ShapeError(f"dot expects equal-length vectors, got {x.data.shape} and {y.data.shape}")
    out = _out(np.asarray(x.data @ y.data), "dot", x, y)
    if out.requires_grad:
        def backward():
            g = out.grad
            if x.requires_grad:
                x.grad += g * y.data
            if y.requires_grad:
                y.grad += g * x.data
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# activations and normalizers


def _check_finite(x: Value, op: str) -> None:
    # One reduction instead of an elementwise mask; a non-finite sum of
    # finite values (overflow) is settled exactly by the full check.
    if not math.isfinite(x.data.sum()) and not np.isfinite(x.data).all():
        raise NumericError(f"{op}: non-finite input")


def tanh(x) -> Value:
    x = as_value(x)
    _check_finite(x, "tanh")
    t = np.tanh(x.data)
    out = _out(t, "tanh", x)
    if out.requires_grad:
        def backward():
            g = out.grad * (1.0 - t * t)
            if _CORRUPT_TANH:
                g = g * 1.05
            x.grad += g
        out._backward = backward
    return out


def sigmoid(x) -> Value:
    x = as_value(x)
    _check_finite(x, "sigmoid")
    # stable two-branch form; saturates cleanly for large |x|
    t = np.exp(-np.abs(x.data))
    d = 1.0 + t
    s = np.where(x.data >= 0, 1.0 / d, t / d)
    out = _out(s, "sigmoid", x)
    if out.requires_grad:
        def backward():
            x.grad += out.grad * s * (1.0 - s)
        out._backward = backward
    return out


def log(x) -> Value:
    x = as_value(x)
    if (x.data <= 0).any():
        raise NumericError("log: non-positive input")
    out = _out(np.log(x.data), "log", x)
    if out.requires_grad:
        def backward():
            x.grad += out.grad / x.data
        out._backward = backward
    return out


def reciprocal(x) -> Value:
    x = as_value(x)
    if (x.data == 0).any():
        raise NumericError("reciprocal: zero input")
    r = 1.0 / x.data
    out = _out(r, "reciprocal", x)
    if out.requires_grad:
        def backward():
            x.grad -= out.grad * r * r
        out._backward = backward
    return out


def softmax(x, axis: int = -1) -> Value:
    """Stable softmax along `axis`; outputs are nonnegative and sum to 1."""
    x = as_value(x)
    _check_finite(x, "softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _out(s, "softmax", x)
    if out.requires_grad:
        def backward():
            g = out.grad
            x.grad += s * (g - (g * s).sum(axis=axis, keepdims=True))
        out._backward = backward
    return out


def log_softmax(x, axis: int = -1) -> Value:
    x = as_value(x)
    _check_finite(x, "log_softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    ls = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = _out(ls, "log_softmax", x)
    if out.requires_grad:
        def backward():
            g = out.grad
            x.grad += g - np.exp(ls) * g.sum(axis=axis, keepdims=True)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# shape surgery


def concat(a, b, axis: int = 0) -> Value:
    a, b = as_value(a), as_value(b)
    if a.data.ndim != b.data.ndim:
        raise ShapeError(f"concat rank mismatch: {a.data.shape} vs {b.data.shape}")
    for i in range(a.data.ndim):
        if i != axis % a.data.ndim and a.data.shape[i] != b.data.shape[i]:
            raise ShapeError(f"concat off-axis mismatch: {a.data.shape} vs {b.data.shape}")
    out = _out(np.concatenate([a.data, b.data], axis=axis), "concat", a, b)
    if out.requires_grad:
        n = a.data.shape[axis]
        def backward():
            ga, gb = np.split(out.grad, [n], axis=axis)
            if a.requires_grad:
                a.grad += ga
            if b.requires_grad:
                b.grad += gb
        out._backward = backward
    return out


def stack(scalars) -> Value:
    """Stack scalar Values into a vector."""
    vals = [as_value(s) for s in scalars]
    out = _out(np.stack([v.data for v in vals]), "stack", *vals)
    if out.requires_grad:
        def backward():
            g = out.grad
            for i, v in enumerate(vals):
                if v.requires_grad:
                    v.grad += g[i]
        out._backward = backward
    return out


def stack_rows(vectors) -> Value:
    """Stack equal-length vector Values into a matrix, one per row."""
    vals = [as_value(v) for v in vectors]
    out = _out(np.stack([v.data for v in vals]), "stack_rows", *vals)
    if out.requires_grad:
        def backward():
            g = out.grad
            for i, v in enumerate(vals):
                if v.requires_grad:
                    v.grad += g[i]
        out._backward = backward
    return out


def transpose(a) -> Value:
    a = as_value(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects rank 2, got shape {a.data.shape}")
    out = _out(a.data.T, "transpose", a)
    if out.requires_grad:
        def backward():
            a.grad += out.grad.T
        out._backward = backward
    return out


def slice1d(x, start: int, stop: int) -> Value:
    x = as_value(x)
    out = _out(x.data[start:stop], "slice1d", x)
    if out.requires_grad:
        def backward():
            x.grad[start:stop] += out.grad
        out._backward = backward
    return out


def pick(x, i: int) -> Value:
    """Select element i of a vector as a scalar."""
    x = as_value(x)
    out = _out(np.asarray(x.data[i]), "pick", x)
    if out.requires_grad:
        def backward():
            x.grad[i] += out.grad
        out._backward = backward
    return out


def take(x, indices) -> Value:
    """Gather rows (axis 0) by index; repeated indices accumulate gradient."""
    x = as_value(x)
    idx = np.asarray(indices, dtype=np.intp)
    out = _out(x.data[idx], "take", x)
    if out.requires_grad:
        def backward():
            np.add.at(x.grad, idx, out.grad)
        out._backward = backward
    return out


def take_row(m, i: int) -> Value:
    """Row i of a matrix as a vector."""
    m = as_value(m)
    if m.data.ndim != 2:
        raise ShapeError(f"take_row expects rank 2, got shape {m.data.shape}")
    out = _out(m.data[i], "take_row", m)
    if out.requires_grad:
        def backward():
            m.grad[i] += out.grad
        out._backward = backward
    return out


def sum_(x) -> Value:
    x = as_value(x)
    out = _out(np.asarray(x.data.sum()), "sum", x)
    if out.requires_grad:
        def backward():
            x.grad += out.grad
        out._backward = backward
    return out


def mean_(x) -> Value:
    x = as_value(x)
    n = x.data.size
    out = _out(np.asarray(x.data.sum() / n), "mean", x)
    if out.requires_grad:
        def backward():
            x.grad += out.grad / n
        out._backward = backward
    return out


def mean_rows(m) -> Value:
    """Column means of a matrix: (n,d) -> (d,)."""
    m = as_value(m)
    if m.data.ndim != 2:
        raise ShapeError(f"mean_rows expects rank 2, got shape {m.data.shape}")
    n = m.data.shape[0]
    out = _out(m.data.mean(axis=0), "mean_rows", m)
    if out.requires_grad:
        def backward():
            m.grad += out.grad / n
        out._backward = backward
    return out


def replicate(s, n: int) -> Value:
    """Copy a scalar into an n-vector; backward sums the n components."""
    s = as_value(s)
    if s.data.size != 1:
        raise ShapeError(f"replicate expects a scalar, got shape {s.data.shape}")
    if n < 1:
        raise ShapeError(f"replicate needs n >= 1, got {n}")
    out = _out(np.full(n, float(s.data)), "replicate", s)
    if out.requires_grad:
        def backward():
            s.grad += out.grad.sum()
        out._backward = backward
    return out


def replicate_cols(p, k: int) -> Value:
    """Copy each entry of a vector across k columns: (n,) -> (n,k)."""
    p = as_value(p)
    if p.data.ndim != 1:
        raise ShapeError(f"replicate_cols expects a vector, got shape {p.data.shape}")
    if k < 1:
        raise ShapeError(f"replicate_cols needs k >= 1, got {k}")
    out = _out(np.repeat(p.data[:, None], k, axis=1), "replicate_cols", p)
    if out.requires_grad:
        def backward():
            p.grad += out.grad.sum(axis=1)
        out._backward = backward
    return out


def tile_row(v, n: int) -> Value:
    """Repeat a vector as n identical rows: (d,) -> (n,d)."""
    v = as_value(v)
    if v.data.ndim != 1:
        raise ShapeError(f"tile_row expects a vector, got shape {v.data.shape}")
    out = _out(np.broadcast_to(v.data, (n, v.data.shape[0])).copy(), "tile_row", v)
    if out.requires_grad:
        def backward():
            v.grad += out.grad.sum(axis=0)
        out._backward = backward
    return out


def dropout(x, rate: float, rng: np.random.Generator) -> Value:
    """Inverted dropout; identity when rate == 0."""
    x = as_value(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    if rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = _out(x.data * keep, "dropout", x)
    if out.requires_grad:
        def backward():
            x.grad += out.grad * keep
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    """Worst-case comparison of analytic vs central-difference gradients."""

    max_rel_error: float = 0.0
    worst_param: str = ""
    worst_index: int = 0
    per_param: dict = field(default_factory=dict)
    coordinates: dict = field(default_factory=dict)  # name -> per-element errors
    analytic: dict = field(default_factory=dict)     # name -> gradient snapshot

    def record(self, name: str, index: int, rel: float) -> None:
        prev = self.per_param.get(name, 0.0)
        if rel >= prev:
            self.per_param[name] = rel
        if rel >= self.max_rel_error:
            self.max_rel_error = rel
            self.worst_param = name
            self.worst_index = index

    def rebuild_summary(self) -> None:
        """Recompute the maxima from `coordinates` after edits."""
        self.max_rel_error, self.worst_param, self.worst_index = 0.0, "", 0
        self.per_param = {}
        for name, errs in self.coordinates.items():
            self.per_param.setdefault(name, 0.0)
            if errs.size:
                i = int(np.argmax(errs))
                self.record(name, i, float(errs[i]))


def probe_coordinate(f, value: Value, index: int, analytic: float,
                     epsilon: float) -> float:
    """Central-difference error of one scalar parameter at one epsilon."""
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")
    flat = value.data.reshape(-1)
    with no_grad():
        orig = flat[index]
        flat[index] = orig + epsilon
        hi = float(f().data)
        flat[index] = orig - epsilon
        lo = float(f().data)
        flat[index] = orig
    if not (np.isfinite(hi) and np.isfinite(lo)):
        raise NumericError(f"probe_coordinate: non-finite loss at index {index}")
    num = (hi - lo) / (2.0 * epsilon)
    return abs(analytic - num) / max(abs(analytic), abs(num), 1e-8)


def finite_diff_report(f, params: dict, epsilon: float = 1e-5,
                       keep_coordinates: bool = False) -> GradCheckReport:
    """Compare f's analytic gradients against central differences.

    `params` maps names to leaf Values; `f()` must rebuild the scalar loss
    from those same leaves on every call, with dropout disabled.  Relative
    error uses denominator max(|analytic|, |numeric|, 1e-8).  With
    `keep_coordinates` the report retains every element's error and the
    analytic gradients, enabling targeted re-probes at other epsilons.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("finite_diff_report: non-finite loss at base point")
    for v in params.values():
        v.zero_grad()
    loss.backward()
    analytic = {k: v.grad.copy() for k, v in params.items()}

    report = GradCheckReport()
    with no_grad():
        for name, v in params.items():
            flat = v.data.reshape(-1)
            ana = analytic[name].reshape(-1)
            report.per_param.setdefault(name, 0.0)
            errs = np.zeros(flat.size) if keep_coordinates else None
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                hi = float(f().data)
                flat[i] = orig - epsilon
                lo = float(f().data)
                flat[i] = orig
                if not (np.isfinite(hi) and np.isfinite(lo)):
                    raise NumericError(f"finite_diff_report: non-finite loss probing {name}[{i}]")
                num = (hi - lo) / (2.0 * epsilon)
                rel = abs(ana[i] - num) / max(abs(ana[i]), abs(num), 1e-8)
                report.record(name, i, rel)
                if errs is not None:
                    errs[i] = rel
            if errs is not None:
                report.coordinates[name] = errs
    if keep_coordinates:
        report.analytic = analytic
    return report


def finite_diff_check(f, params: dict, epsilon: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients."""
    return finite_diff_report(f, params, epsilon).max_rel_error
