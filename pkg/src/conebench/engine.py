"""Minimal reverse-mode differentiation over dense float64 matrices.

Expressions are immutable DAGs of primitive nodes built once and then
evaluated under name -> array bindings, so a fixed loss graph can be
re-evaluated every epoch with updated parameters. Segment primitives
(per-neighborhood softmax and weighted sum) cover graph attention;
``log_mean_exp`` exists as a dedicated stabilized primitive so the
mutual-information term never computes a naive exp-then-log.

Everything is a 2-D array; scalars are shape (1, 1). No broadcasting
except the dedicated row-vector bias op.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EngineError(Exception):
    pass


class NonFiniteError(EngineError):
    """An intermediate value contained NaN or Inf."""


def _as_matrix(value) -> np.ndarray:
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise EngineError(f"expected a matrix, got ndim={a.ndim}")
    return a


def _check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(a).all():
        raise NonFiniteError(f"non-finite values in {what}")
    return a


class Expr:
    """Base node. Subclasses define forward/backward for fixed-arity args."""

    __slots__ = ("shape", "args")

    def __init__(self, shape, args=()):
        self.shape = (int(shape[0]), int(shape[1]))
        self.args = tuple(args)

    def _forward(self, *vals):
        raise NotImplementedError

    def _backward(self, grad, vals, out):
        """Return one gradient array (or None) per argument."""
        raise NotImplementedError

    def label(self) -> str:
        return type(self).__name__


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str, shape):
        super().__init__(shape)
        self.name = name

    def label(self):
        return f"Var({self.name})"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        v = _as_matrix(value)
        _check_finite(v, "constant")
        super().__init__(v.shape)
        self.value = v
        self.value.setflags(write=False)


def const(value) -> Const:
    return Const(value)


def var(name: str, shape) -> Var:
    if len(shape) != 2:
        raise EngineError("variables must have a (rows, cols) shape")
    return Var(name, shape)


def _require_shape(e: Expr, shape, what: str) -> None:
    if e.shape != tuple(shape):
        raise EngineError(f"{what}: expected shape {tuple(shape)}, got {e.shape}")


def _require_same_shape(a: Expr, b: Expr, what: str) -> None:
    if a.shape != b.shape:
        raise EngineError(f"{what}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise primitives


class _Unary(Expr):
    __slots__ = ()

    def __init__(self, x: Expr):
        super().__init__(x.shape, (x,))


class Add(Expr):
    __slots__ = ()

    def __init__(self, a, b):
        _require_same_shape(a, b, "add")
        super().__init__(a.shape, (a, b))

    def _forward(self, a, b):
        return a + b

    def _backward(self, grad, vals, out):
        return grad, grad


class Sub(Expr):
    __slots__ = ()

    def __init__(self, a, b):
        _require_same_shape(a, b, "sub")
        super().__init__(a.shape, (a, b))

    def _forward(self, a, b):
        return a - b

    def _backward(self, grad, vals, out):
        return grad, -grad


class Mul(Expr):
    __slots__ = ()

    def __init__(self, a, b):
        _require_same_shape(a, b, "mul")
        super().__init__(a.shape, (a, b))

    def _forward(self, a, b):
        return a * b

    def _backward(self, grad, vals, out):
        a, b = vals
        return grad * b, grad * a


class Affine(_Unary):
    """scale * x + shift with python-float coefficients."""

    __slots__ = ("scale", "shift")

    def __init__(self, x, scale: float, shift: float = 0.0):
        super().__init__(x)
        self.scale = float(scale)
        self.shift = float(shift)

    def _forward(self, x):
        return self.scale * x + self.shift

    def _backward(self, grad, vals, out):
        return (self.scale * grad,)


class Elu(_Unary):
    __slots__ = ()

    def _forward(self, x):
        return np.where(x >= 0, x, np.expm1(np.minimum(x, 0.0)))

    def _backward(self, grad, vals, out):
        (x,) = vals
        return (grad * np.where(x >= 0, 1.0, out + 1.0),)


class LeakyRelu(_Unary):
    __slots__ = ("slope",)

    def __init__(self, x, slope: float = 0.2):
        super().__init__(x)
        self.slope = float(slope)

    def _forward(self, x):
        return np.where(x >= 0, x, self.slope * x)

    def _backward(self, grad, vals, out):
        (x,) = vals
        return (grad * np.where(x >= 0, 1.0, self.slope),)


class Sigmoid(_Unary):
    __slots__ = ()

    def _forward(self, x):
        # split by sign to avoid overflow in exp
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    def _backward(self, grad, vals, out):
        return (grad * out * (1.0 - out),)


class Exp(_Unary):
    __slots__ = ()

    def _forward(self, x):
        with np.errstate(over="ignore"):
            return np.exp(x)

    def _backward(self, grad, vals, out):
        return (grad * out,)


class Log(_Unary):
    __slots__ = ()

    def _forward(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x)

    def _backward(self, grad, vals, out):
        (x,) = vals
        return (grad / x,)


class Square(_Unary):
    __slots__ = ()

    def _forward(self, x):
        return x * x

    def _backward(self, grad, vals, out):
        (x,) = vals
        return (2.0 * grad * x,)


class Clip(_Unary):
    """Clamp to [lo, hi]; gradient passes only strictly inside the band."""

    __slots__ = ("lo", "hi")

    def __init__(self, x, lo: float, hi: float):
        if not lo < hi:
            raise EngineError("clip bounds must satisfy lo < hi")
        super().__init__(x)
        self.lo = float(lo)
        self.hi = float(hi)

    def _forward(self, x):
        return np.clip(x, self.lo, self.hi)

    def _backward(self, grad, vals, out):
        (x,) = vals
        return (grad * ((x > self.lo) & (x < self.hi)),)


# ---------------------------------------------------------------------------
# structural primitives


class MatMul(Expr):
    __slots__ = ()

    def __init__(self, a, b):
        if a.shape[1] != b.shape[0]:
            raise EngineError(f"matmul: inner dims {a.shape} x {b.shape} differ")
        super().__init__((a.shape[0], b.shape[1]), (a, b))

    def _forward(self, a, b):
        return a @ b

    def _backward(self, grad, vals, out):
        a, b = vals
        return grad @ b.T, a.T @ grad


class ConcatCols(Expr):
    __slots__ = ()

    def __init__(self, a, b):
        if a.shape[0] != b.shape[0]:
            raise EngineError(f"concat-cols: row counts {a.shape[0]} != {b.shape[0]}")
        super().__init__((a.shape[0], a.shape[1] + b.shape[1]), (a, b))

    def _forward(self, a, b):
        return np.concatenate([a, b], axis=1)

    def _backward(self, grad, vals, out):
        k = self.args[0].shape[1]
        return grad[:, :k], grad[:, k:]


class AddRowVec(Expr):
    """x + b with b a (1, d) row broadcast over rows of x."""

    __slots__ = ()

    def __init__(self, x, b):
        if b.shape != (1, x.shape[1]):
            raise EngineError(f"add-rowvec: bias shape {b.shape} vs cols {x.shape[1]}")
        super().__init__(x.shape, (x, b))

    def _forward(self, x, b):
        return x + b

    def _backward(self, grad, vals, out):
        return grad, grad.sum(axis=0, keepdims=True)


def _scatter_add_rows(idx: np.ndarray, values: np.ndarray, n_rows: int) -> np.ndarray:
    """Row scatter-add via per-column bincount (faster than ufunc.at)."""
    out = np.empty((n_rows, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(idx, weights=values[:, c], minlength=n_rows)
    return out


class GatherRows(Expr):
    """Select rows by a fixed index array (duplicates allowed)."""

    __slots__ = ("indices",)

    def __init__(self, x, indices):
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
            raise EngineError("gather-rows: index out of range")
        super().__init__((idx.size, x.shape[1]), (x,))
        self.indices = idx

    def _forward(self, x):
        return x[self.indices]

    def _backward(self, grad, vals, out):
        (x,) = vals
        return (_scatter_add_rows(self.indices, grad, x.shape[0]),)


class SliceRows(Expr):
    """Contiguous row slice [start, stop) of a matrix."""

    __slots__ = ("start", "stop")

    def __init__(self, x, start: int, stop: int):
        if not 0 <= start <= stop <= x.shape[0]:
            raise EngineError("slice-rows: bounds out of range")
        super().__init__((stop - start, x.shape[1]), (x,))
        self.start = start
        self.stop = stop

    def _forward(self, x):
        return x[self.start:self.stop]

    def _backward(self, grad, vals, out):
        (x,) = vals
        gx = np.zeros_like(x)
        gx[self.start:self.stop] = grad
        return (gx,)


class Mean(Expr):
    __slots__ = ()

    def __init__(self, x):
        super().__init__((1, 1), (x,))

    def _forward(self, x):
        return np.array([[x.mean()]])

    def _backward(self, grad, vals, out):
        (x,) = vals
        return (np.full_like(x, grad[0, 0] / x.size),)


class LogMeanExp(Expr):
    """log((1/n) sum exp(x)) over all entries, max-shifted for stability."""

    __slots__ = ()

    def __init__(self, x):
        super().__init__((1, 1), (x,))

    def _forward(self, x):
        m = x.max()
        return np.array([[m + math.log(np.exp(x - m).mean())]])

    def _backward(self, grad, vals, out):
        (x,) = vals
        # d/dx_i = softmax(x)_i
        w = np.exp(x - out[0, 0]) / x.size
        return (grad[0, 0] * w,)


# ---------------------------------------------------------------------------
# segment primitives (contiguous segments delimited by an offsets array)


def _check_offsets(offsets, total: int) -> np.ndarray:
    off = np.asarray(offsets, dtype=np.int64).ravel()
    if off.size < 1 or off[0] != 0 or off[-1] != total:
        raise EngineError("offsets must start at 0 and end at the row count")
    if (np.diff(off) < 0).any():
        raise EngineError("offsets must be nondecreasing")
    return off


def _segment_ids(offsets: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(offsets.size - 1), np.diff(offsets))


class SegmentSoftmax(Expr):
    """Softmax within each contiguous segment of an (E, 1) column."""

    __slots__ = ("offsets", "seg_ids")

    def __init__(self, x, offsets):
        if x.shape[1] != 1:
            raise EngineError("segment-softmax expects a single column")
        super().__init__(x.shape, (x,))
        self.offsets = _check_offsets(offsets, x.shape[0])
        self.seg_ids = _segment_ids(self.offsets)

    def _forward(self, x):
        v = x[:, 0]
        n_seg = self.offsets.size - 1
        mx = np.full(n_seg, -np.inf)
        np.maximum.at(mx, self.seg_ids, v)
        ex = np.exp(v - mx[self.seg_ids])
        sums = np.bincount(self.seg_ids, weights=ex, minlength=n_seg)
        return (ex / sums[self.seg_ids])[:, None]

    def _backward(self, grad, vals, out):
        y = out[:, 0]
        g = grad[:, 0]
        dot = np.bincount(self.seg_ids, weights=y * g,
                          minlength=self.offsets.size - 1)
        return ((y * (g - dot[self.seg_ids]))[:, None],)


class SegmentWeightedSum(Expr):
    """Per-segment sum of w_e * v_e: (E,1) weights x (E,d) values -> (S,d)."""

    __slots__ = ("offsets", "seg_ids")

    def __init__(self, w, v, offsets):
        if w.shape != (v.shape[0], 1):
            raise EngineError("segment-weighted-sum: weights must be (rows, 1)")
        off = _check_offsets(offsets, v.shape[0])
        super().__init__((off.size - 1, v.shape[1]), (w, v))
        self.offsets = off
        self.seg_ids = _segment_ids(off)

    def _forward(self, w, v):
        return _scatter_add_rows(self.seg_ids, w * v, self.shape[0])

    def _backward(self, grad, vals, out):
        w, v = vals
        g = grad[self.seg_ids]
        return (g * v).sum(axis=1, keepdims=True), g * w


# ---------------------------------------------------------------------------
# functional constructors


def add(a, b):
    return Add(a, b)


def sub(a, b):
    return Sub(a, b)


def mul(a, b):
    return Mul(a, b)


def affine(x, scale, shift=0.0):
    return Affine(x, scale, shift)


def neg(x):
    return Affine(x, -1.0)


def matmul(a, b):
    return MatMul(a, b)


def concat_cols(a, b):
    return ConcatCols(a, b)


def add_rowvec(x, b):
    return AddRowVec(x, b)


def gather_rows(x, indices):
    return GatherRows(x, indices)


def slice_rows(x, start, stop):
    return SliceRows(x, start, stop)


def elu(x):
    return Elu(x)


def leaky_relu(x, slope=0.2):
    return LeakyRelu(x, slope)


def sigmoid(x):
    return Sigmoid(x)


def exp(x):
    return Exp(x)


def log(x):
    return Log(x)


def square(x):
    return Square(x)


def clip(x, lo, hi):
    return Clip(x, lo, hi)


def mean(x):
    return Mean(x)


def log_mean_exp(x):
    return LogMeanExp(x)


def segment_softmax(x, offsets):
    return SegmentSoftmax(x, offsets)


def segment_weighted_sum(w, v, offsets):
    return SegmentWeightedSum(w, v, offsets)


# ---------------------------------------------------------------------------
# evaluation


def _topo_order(roots) -> list:
    order, seen = [], set()
    stack = [(r, False) for r in reversed(roots)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in node.args:
            if id(child) not in seen:
                stack.append((child, False))
    return order


def _forward_pass(order, bindings) -> dict:
    env = {}
    for node in order:
        if isinstance(node, Const):
            env[id(node)] = node.value
        elif isinstance(node, Var):
            if node.name not in bindings:
                raise EngineError(f"unbound input '{node.name}'")
            v = _as_matrix(bindings[node.name])
            if v.shape != node.shape:
                raise EngineError(
                    f"binding for '{node.name}' has shape {v.shape}, "
                    f"declared {node.shape}")
            env[id(node)] = _check_finite(v, f"binding '{node.name}'")
        else:
            vals = [env[id(a)] for a in node.args]
            # overflow and invalid results surface as NonFiniteError below
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                out = node._forward(*vals)
            env[id(node)] = _check_finite(out, node.label())
    return env


def evaluate(expr, bindings=None):
    """Forward-evaluate one expression (or a list sharing one pass)."""
    roots = expr if isinstance(expr, (list, tuple)) else [expr]
    env = _forward_pass(_topo_order(list(roots)), bindings or {})
    out = [env[id(r)] for r in roots]
    return out if isinstance(expr, (list, tuple)) else out[0]


def value_and_grad(root, bindings, wrt, aux=()):
    """Values of ``[root] + aux`` plus gradients of scalar ``root``.

    ``wrt`` is an iterable of variable names; gradients of variables that
    do not appear in the graph come back as zeros of the binding's shape.
    """
    if root.shape != (1, 1):
        raise EngineError(f"gradient root must be scalar, got shape {root.shape}")
    wrt = list(wrt)
    roots = [root] + list(aux)
    order = _topo_order(roots)
    env = _forward_pass(order, bindings)

    adjoint = {id(root): np.ones((1, 1))}
    grads = {name: None for name in wrt}
    wanted = set(wrt)
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Var):
            if node.name in wanted:
                prev = grads[node.name]
                grads[node.name] = g.copy() if prev is None else prev + g
            continue
        if isinstance(node, Const):
            continue
        vals = [env[id(a)] for a in node.args]
        child_grads = node._backward(g, vals, env[id(node)])
        for child, cg in zip(node.args, child_grads):
            if cg is None:
                continue
            acc = adjoint.get(id(child))
            adjoint[id(child)] = cg if acc is None else acc + cg

    for name in wrt:
        if grads[name] is None:
            grads[name] = np.zeros_like(_as_matrix(bindings[name]))
        else:
            _check_finite(grads[name], f"gradient of '{name}'")
    return [env[id(r)] for r in roots], grads


def gradient(root, bindings, wrt):
    """Reverse-mode gradients of a scalar expression."""
    _, grads = value_and_grad(root, bindings, wrt)
    return grads


# ---------------------------------------------------------------------------
# optimizer and initialization


@dataclass
class AdamState:
    """Moment buffers and step counter for one parameter set."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update; returns (new params, state)."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise EngineError(
                f"adam: gradient shape {g.shape} != parameter shape {p.shape} "
                f"for '{name}'")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out, state


def xavier_init(rows: int, cols: int, seed) -> np.ndarray:
    """Uniform Xavier/Glorot sample of shape (rows, cols), fixed per seed."""
    if rows < 1 or cols < 1:
        raise ValueError("xavier_init needs rows, cols >= 1")
    return xavier(np.random.default_rng(seed), rows, cols)


def xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))
