"""Minimal reverse-mode differentiation over numpy arrays.

Each :class:`Tensor` holds a float64 value plus the closure that maps the
gradient of its output back onto its parents. There is no global tape: the
graph is the set of parent links reachable from the loss, so independent
forward passes never share state.

Only the operations the encoders and losses need are provided. Sparse
symmetric matrices (:class:`SparseSymmetric`) may carry differentiable
entry values, which is how gradients reach a relaxed edge perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateInputError, DimensionError, MissingDependencyError, NumericError

BN_VAR_FLOOR = 1e-5
BN_MOMENTUM = 0.1
NORM_FLOOR = 1e-12
RELATIVE_FLOOR = 1e-6
ABSOLUTE_FLOOR = 1e-8


class Tensor:
    __slots__ = ("value", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{tag}, grad={self.requires_grad})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def variable(value, name: str) -> Tensor:
    """Leaf tensor that gradients are requested for."""
    return Tensor(np.array(value, dtype=np.float64, copy=True), requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(value, parents, backward_fn if needs else None, requires_grad=needs)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _node(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    out = av / bv
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
    )


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return _node(av**exponent, (a,), lambda g: (g * exponent * av ** (exponent - 1),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    av, bv = a.value, b.value
    return _node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.value.T, (a,), lambda g: (g.T,))


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.value.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return _node(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


# ------------------------------------------------------------- elementwise fns


def relu(a) -> Tensor:
    a = as_tensor(a)
    # subgradient at exactly 0 is 0
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def identity(a) -> Tensor:
    return as_tensor(a)


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": relu,
    "sigmoid": sigmoid,
    "identity": identity,
}


def elementwise(a, fn: str) -> Tensor:
    try:
        return ACTIVATIONS[fn](a)
    except KeyError:
        raise ValueError(f"unknown elementwise function {fn!r}") from None


# ------------------------------------------------------------ indexing / shape


def take_rows(a, index: np.ndarray) -> Tensor:
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.value[index], (a,), back)


def index_add(n: int, index: np.ndarray, src) -> Tensor:
    """Scatter-add rows of ``src`` into a zero array with ``n`` rows."""
    src = as_tensor(src)
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((n,) + src.shape[1:])
    np.add.at(out, index, src.value)
    return _node(out, (src,), lambda g: (g[index],))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]
    return _node(
        np.concatenate([t.value for t in ts], axis=axis),
        ts,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


# ------------------------------------------------------------- fused kernels


def l2_normalize_rows(a, floor: float = NORM_FLOOR) -> Tensor:
    """Row-wise x / max(||x||, floor)."""
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise DimensionError("l2_normalize_rows expects a matrix")
    raw = np.sqrt(np.einsum("ij,ij->i", a.value, a.value))[:, None]
    live = raw > floor
    norm = np.where(live, raw, floor)
    out = a.value / norm

    def back(g):
        radial = np.einsum("ij,ij->i", g, out)[:, None] * out
        return (np.where(live, g - radial, g) / norm,)

    return _node(out, (a,), back)


def masked_logsumexp(a, mask: np.ndarray) -> Tensor:
    """Row-wise log Σ_j exp(a[i, j]) over entries where ``mask`` is True."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise DimensionError("mask shape must match input")
    if not mask.any(axis=1).all():
        raise DegenerateInputError("every row needs at least one unmasked entry")
    shifted = np.where(mask, a.value, -np.inf)
    peak = shifted.max(axis=1, keepdims=True)
    w = np.exp(shifted - peak)
    total = w.sum(axis=1, keepdims=True)
    out = (np.log(total) + peak)[:, 0]
    soft = w / total
    return _node(out, (a,), lambda g: (g[:, None] * soft,))


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM

    @classmethod
    def fresh(cls, width: int) -> "BatchNormState":
        return cls(np.zeros(width), np.ones(width))

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.running_mean.copy(), self.running_var.copy(), self.momentum)


def batch_norm(x, scale, shift, mode: str, state: BatchNormState, update_stats: bool = True) -> Tensor:
    """Column-wise batch normalization.

    Train mode divides by sqrt(max(var, 1e-5)) with the biased batch variance
    and, when ``update_stats`` is set, folds the batch statistics into
    ``state`` with momentum 0.1 (unbiased variance, as is conventional).
    """
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    rows, cols = x.shape
    if scale.shape != (cols,) or shift.shape != (cols,):
        raise DimensionError("batch norm scale/shift must match column count")
    if mode == "eval":
        std = np.sqrt(np.maximum(state.running_var, BN_VAR_FLOOR))
        xhat = (x.value - state.running_mean) / std
        live = None
    elif mode == "train":
        if rows < 2:
            raise DegenerateInputError("train-mode batch norm needs at least two rows")
        mu = x.value.mean(axis=0)
        var = x.value.var(axis=0)
        live = var > BN_VAR_FLOOR
        std = np.sqrt(np.where(live, var, BN_VAR_FLOOR))
        xhat = (x.value - mu) / std
        if update_stats:
            m = state.momentum
            state.running_mean[:] = (1 - m) * state.running_mean + m * mu
            state.running_var[:] = (1 - m) * state.running_var + m * var * rows / (rows - 1)
    else:
        raise ValueError(f"unknown batch norm mode {mode!r}")

    sv = scale.value

    def back(g):
        gy = g * sv
        if live is None:
            gx = gy / std
        else:
            centered = gy - gy.mean(axis=0)
            radial = xhat * (gy * xhat).mean(axis=0)
            gx = np.where(live, centered - radial, centered) / std
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _node(xhat * sv + shift.value, (x, scale, shift), back)


# ---------------------------------------------------------------- sparse


@dataclass
class SparseSymmetric:
    """Symmetric n x n matrix stored as its strict upper triangle plus diagonal.

    ``values`` and ``diag`` may be plain arrays or :class:`Tensor` objects; in
    the latter case :func:`spmm` propagates gradients to them.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray | Tensor
    diag: np.ndarray | Tensor | None = None
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        if not isinstance(self.values, Tensor):
            self.values = np.asarray(self.values, dtype=np.float64)
        if self.diag is not None and not isinstance(self.diag, Tensor):
            self.diag = np.asarray(self.diag, dtype=np.float64)
        if self.check:
            self._validate()

    def _validate(self):
        m = len(self.rows)
        if len(self.cols) != m or _value(self.values).shape != (m,):
            raise DimensionError("rows, cols and values must have equal length")
        if m:
            if np.any(self.rows >= self.cols):
                raise DimensionError("entries must lie strictly above the diagonal")
            if self.rows.min() < 0 or self.cols.max() >= self.n:
                raise DimensionError("entry index out of range")
            keys = self.rows * self.n + self.cols
            if len(np.unique(keys)) != m:
                raise DimensionError("duplicate entry")
        if self.diag is not None and _value(self.diag).shape != (self.n,):
            raise DimensionError("diagonal must have length n")

    @property
    def nnz_upper(self) -> int:
        return len(self.rows)

    @property
    def differentiable(self) -> bool:
        return any(isinstance(t, Tensor) and t.requires_grad for t in (self.values, self.diag))

    def value_arrays(self) -> tuple[np.ndarray, np.ndarray | None]:
        d = None if self.diag is None else _value(self.diag)
        return _value(self.values), d

    def densify(self) -> np.ndarray:
        v, d = self.value_arrays()
        out = np.zeros((self.n, self.n))
        out[self.rows, self.cols] = v
        out[self.cols, self.rows] = v
        if d is not None:
            out[np.arange(self.n), np.arange(self.n)] = d
        return out

    def to_scipy(self) -> sp.csr_matrix:
        v, d = self.value_arrays()
        r, c, data = [self.rows, self.cols], [self.cols, self.rows], [v, v]
        if d is not None:
            idx = np.arange(self.n)
            r.append(idx)
            c.append(idx)
            data.append(d)
        return sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(r), np.concatenate(c))), shape=(self.n, self.n)
        )

    @classmethod
    def from_dense(cls, dense: np.ndarray, keep_diag: bool = True) -> "SparseSymmetric":
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DimensionError("expected a square matrix")
        if not np.allclose(dense, dense.T, atol=0, rtol=0):
            raise DimensionError("matrix is not symmetric")
        r, c = np.nonzero(np.triu(dense, 1))
        diag = np.diag(dense).copy() if keep_diag and np.any(np.diag(dense)) else None
        return cls(dense.shape[0], r, c, dense[r, c], diag)


def _value(x):
    return x.value if isinstance(x, Tensor) else x


def spmm(s: SparseSymmetric, b) -> Tensor:
    """Sparse-symmetric times dense, differentiable in ``b`` and in the entries of ``s``."""
    b = as_tensor(b)
    if b.value.ndim != 2 or b.shape[0] != s.n:
        raise DimensionError(f"spmm shape mismatch: n={s.n}, b={b.shape}")
    n, rows, cols = s.n, s.rows, s.cols
    bv = b.value
    # near-dense supports (every pair during an attack) are cheaper as dense products
    dense_path = len(rows) * 8 > n * n
    if dense_path:
        mat = s.densify()
        out = mat @ bv
    else:
        mat = s.to_scipy()
        out = np.asarray(mat @ bv)

    vals = s.values if isinstance(s.values, Tensor) else None
    diag = s.diag if isinstance(s.diag, Tensor) else None
    parents = [b] + [t for t in (vals, diag) if t is not None]

    def back(g):
        grads = [mat @ g if dense_path else np.asarray(mat @ g)]
        if vals is not None or diag is not None:
            if n <= 2048:
                outer = g @ bv.T
                gv = outer[rows, cols] + outer[cols, rows]
                gd = np.diagonal(outer).copy()
            else:
                gv = np.einsum("ij,ij->i", g[rows], bv[cols]) + np.einsum("ij,ij->i", g[cols], bv[rows])
                gd = np.einsum("ij,ij->i", g, bv)
            if vals is not None:
                grads.append(gv)
            if diag is not None:
                grads.append(gd)
        return tuple(grads)

    return _node(out, parents, back)


# ---------------------------------------------------------------- backward


class GradientMap(dict):
    """Variable name -> gradient array (same shape as the variable)."""


def _topological(loss: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, wanted: Iterable[Tensor]) -> GradientMap:
    """Exact reverse-mode partials of a scalar ``loss`` wrt each tensor in ``wanted``."""
    wanted = list(wanted)
    if loss.value.size != 1:
        raise DimensionError("loss must be a scalar")
    order = _topological(loss)
    reached = {id(t) for t in order}
    for w in wanted:
        if id(w) not in reached:
            raise MissingDependencyError(f"variable {w.name!r} does not influence the loss")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    keep = {id(w) for w in wanted}
    for node in reversed(order):
        g = grads.get(id(node)) if id(node) in keep else grads.pop(id(node), None)
        if g is None or node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
    out = GradientMap()
    for i, w in enumerate(wanted):
        key = w.name if w.name is not None else str(i)
        out[key] = grads.get(id(w), np.zeros_like(w.value))
    return out


# ------------------------------------------------------------ gradient check


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x0: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between :func:`backward` and central differences.

    Relative error per entry is |a - n| / max(|a|, |n|, floor). The floor is
    the largest of 1e-8, 1e-6 max|a| and 1e5 times the rounding unit of the
    difference quotient (machine eps |f| / step). Summed roundings put a few
    such units of noise on every quotient, so entries near that noise are
    judged on an absolute scale.
    """
    errors = finite_diff_check_many(lambda p: f(p["x"]), {"x": x0}, step)
    return errors["x"]


def finite_diff_check_many(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    inputs: Mapping[str, np.ndarray],
    step: float = 1e-5,
) -> dict[str, float]:
    if step <= 0:
        raise ValueError("step must be positive")
    inputs = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}
    vars_ = {k: variable(v, k) for k, v in inputs.items()}
    loss = f(vars_)
    if not np.all(np.isfinite(loss.value)):
        raise NumericError("function value is not finite")
    analytic = backward(loss, list(vars_.values()))
    rounding = 1e5 * np.finfo(np.float64).eps * max(abs(float(loss.value)), 1.0) / step

    def evaluate(name, arr):
        args = {k: Tensor(v) for k, v in inputs.items()}
        args[name] = Tensor(arr)
        val = float(f(args).value)
        if not np.isfinite(val):
            raise NumericError("function value is not finite")
        return val

    result = {}
    for name, x in inputs.items():
        numeric = np.zeros_like(x)
        flat = numeric.reshape(-1)
        for idx in range(x.size):
            up, down = x.copy().reshape(-1), x.copy().reshape(-1)
            up[idx] += step
            down[idx] -= step
            flat[idx] = (evaluate(name, up.reshape(x.shape)) - evaluate(name, down.reshape(x.shape))) / (2 * step)
        a = analytic[name]
        floor = max(RELATIVE_FLOOR * float(np.abs(a).max(initial=0.0)), ABSOLUTE_FLOOR, rounding)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        result[name] = float(np.max(np.abs(a - numeric) / denom)) if x.size else 0.0
    return result
