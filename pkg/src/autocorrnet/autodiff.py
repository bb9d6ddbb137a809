"""Tape-based reverse-mode differentiation over dense float64 arrays.

Operations are recorded on the innermost active :class:`Tape` whenever one of
their inputs requires a gradient. Without an active tape they simply compute
values, which is how inference runs.

Example::

    w = Parameter(np.ones((3, 1)))
    with Tape() as tape:
        loss = mean(square(matmul(x, w)))
    backward(tape, loss)
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class AutodiffError(ValueError):
    pass


class ShapeError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


_ids = itertools.count()


class Parameter(Tensor):
    """Trainable tensor. ``grad`` accumulates until :meth:`zero_grad`."""

    __slots__ = ("grad", "id", "name")

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.id = next(_ids)
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def assign(self, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.data.shape:
            raise ShapeError(f"cannot assign shape {value.shape} to parameter of shape {self.data.shape}")
        self.data[...] = value

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    grad_fn: Callable[[np.ndarray], tuple]
    op: str


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


@dataclass
class Tape:
    """Ordered record of the primitive operations executed inside ``with tape:``."""

    nodes: list[_Node] = field(default_factory=list)

    def __enter__(self) -> Tape:
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)


def _active_tape() -> Tape | None:
    s = _stack()
    return s[-1] if s else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finish(value: np.ndarray, inputs: tuple[Tensor, ...], grad_fn, op: str) -> Tensor:
    if not np.isfinite(value).all():
        raise NonFiniteError(f"{op} produced a non-finite value")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        tape.nodes.append(_Node(out, inputs, grad_fn, op))
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return _finish(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return _finish(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    """Elementwise product of equal-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _finish(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _finish(a.data * c, (a,), lambda g: (g * c,), "scalar_mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _finish(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def affine(x, w, b) -> Tensor:
    """``x @ w`` plus the 1 x d row ``b`` added to every row."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine: incompatible shapes {x.shape} and {w.shape}")
    if b.shape != (1, w.shape[1]):
        raise ShapeError(f"affine: bias must have shape (1, {w.shape[1]}), got {b.shape}")
    xd, wd = x.data, w.data
    return _finish(xd @ wd + b.data, (x, w, b),
                   lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0, keepdims=True)), "affine")


def relu(a) -> Tensor:
    a = as_tensor(a)
    # subgradient at exactly 0 is 0
    mask = a.data > 0
    return _finish(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _finish(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _finish(ad * ad, (a,), lambda g: (2.0 * ad * g,), "square")


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    shape = a.shape
    return _finish(np.asarray(a.data.mean()), (a,), lambda g: (np.full(shape, g / n),), "mean")


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _finish(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, g),), "sum")


def concat(tensors, axis: int = 1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("concat: no inputs")
    value = np.concatenate([t.data for t in ts], axis=axis)
    cuts = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _finish(value, ts, lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def slice_(a, index) -> Tensor:
    """``a[index]`` for basic (non-fancy) indices."""
    a = as_tensor(a)
    shape = a.shape

    def grad_fn(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _finish(np.array(a.data[index]), (a,), grad_fn, "slice")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _finish(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def repeat_rows(a, n: int) -> Tensor:
    """Stack a 1 x d row ``n`` times into n x d."""
    a = as_tensor(a)
    if a.data.ndim != 2 or a.shape[0] != 1:
        raise ShapeError(f"repeat_rows expects a 1 x d tensor, got {a.shape}")
    return _finish(np.repeat(a.data, n, axis=0), (a,), lambda g: (g.sum(axis=0, keepdims=True),), "repeat_rows")


def tile_cols(a, reps: int) -> Tensor:
    """Concatenate ``reps`` copies of ``a`` along columns."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"tile_cols expects a matrix, got {a.shape}")
    d = a.shape[1]
    return _finish(
        np.tile(a.data, (1, reps)), (a,),
        lambda g: (g.reshape(g.shape[0], reps, d).sum(axis=1),), "tile_cols",
    )


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every Parameter reached from ``loss``.

    The tape is left untouched, so replaying it after ``zero_grad`` yields the
    same gradients.
    """
    if loss.data.size != 1:
        raise AutodiffError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.grad_fn(g)):
            if not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if isinstance(inp, Parameter):
                # parameters are leaves: flush immediately
                inp.grad += grads.pop(key)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


@dataclass
class GradCheckReport:
    """Max relative error per parameter between tape gradients and central differences.

    ``relative_error[name] = max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-12)``
    """

    relative_error: dict[str, float]
    tol: float
    excluded: bool = False
    reason: str = ""

    @property
    def max_error(self) -> float:
        return max(self.relative_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.excluded or self.max_error < self.tol


def _relu_inputs_near_kink(tape: Tape, eps: float) -> bool:
    for node in tape.nodes:
        if node.op == "relu":
            if np.any(np.abs(node.inputs[0].data) <= 4 * eps):
                return True
    return False


def grad_check(f: Callable[[], Tensor], params, eps: float = 1e-5, tol: float = 1e-5,
               n_points: int | None = None, seed: int = 0) -> GradCheckReport:
    """Compare tape gradients of ``f()`` against central finite differences.

    With ``n_points`` only that many randomly chosen parameter entries are
    differenced (drawn uniformly over all entries); otherwise every entry is.
    Errors are scaled by the largest analytic or numeric gradient entry of the
    parameter, so tiny gradients do not inflate them.

    A point where some relu input lies within a few ``eps`` of its kink is
    reported as excluded instead of compared, since the finite difference
    straddles the non-differentiable point there.
    """
    params = list(params)
    zero_grads(params)
    with Tape() as tape:
        loss = f()
    if _relu_inputs_near_kink(tape, eps):
        return GradCheckReport({}, tol, excluded=True, reason="relu input within finite-difference step of 0")
    backward(tape, loss)
    sizes = [p.data.size for p in params]
    if n_points is None:
        chosen = [np.arange(n) for n in sizes]
    else:
        flat_idx = np.random.default_rng(seed).choice(sum(sizes), size=min(n_points, sum(sizes)), replace=False)
        offsets = np.cumsum([0] + sizes)
        chosen = [np.sort(flat_idx[(flat_idx >= lo) & (flat_idx < hi)] - lo)
                  for lo, hi in zip(offsets[:-1], offsets[1:])]
    errors = {}
    for k, (p, idx) in enumerate(zip(params, chosen)):
        if idx.size == 0:
            continue
        analytic = p.grad.reshape(-1)[idx].copy()
        numeric = np.zeros(idx.size)
        flat = p.data.reshape(-1)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            numeric[j] = (up - down) / (2 * eps)
        scale = max(np.abs(p.grad).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
        errors[p.name or f"param{k}"] = float(np.abs(analytic - numeric).max(initial=0.0) / scale)
    zero_grads(params)
    return GradCheckReport(errors, tol)
