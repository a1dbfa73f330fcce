"""Tape-based reverse-mode differentiation over numpy arrays.

A :class:`GradTape` records primitive ops in execution order (a Wengert
list). Values flow as :class:`Var` handles; :func:`reverse_grad` walks the
tape backwards from a scalar output. Ops act on the last axis and
broadcast over leading axes, so the same code serves single vectors
(inference, attacks) and minibatches (training).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, UsageError
from .tensor import CE_FLOOR, sigmoid, softmax


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _fwd_max(x):
    return np.max(x, axis=-1)


def _bwd_max(g, out, x):
    idx = np.argmax(x, axis=-1)  # first maximum wins
    mask = np.zeros_like(x)
    np.put_along_axis(mask, np.expand_dims(idx, -1), 1.0, axis=-1)
    return (mask * np.expand_dims(g, -1),)


def _bwd_softmax(g, out, x):
    return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)


def _bwd_matmul(g, out, a, b):
    # promote 1-d operands the same way np.matmul does
    a2 = a[None, :] if a.ndim == 1 else a
    b2 = b[:, None] if b.ndim == 1 else b
    g2 = g
    if a.ndim == 1:
        g2 = np.expand_dims(g2, -2)
    if b.ndim == 1:
        g2 = np.expand_dims(g2, -1)
    ga = g2 @ np.swapaxes(b2, -1, -2)
    gb = np.swapaxes(a2, -1, -2) @ g2
    ga = _unbroadcast(ga, a2.shape).reshape(a.shape)
    gb = _unbroadcast(gb, b2.shape).reshape(b.shape)
    return ga, gb


def _fwd_take(x, index):
    return np.take(x, index, axis=-1)


def _bwd_take(g, out, x, index):
    gx = np.zeros_like(x)
    np.add.at(gx, (Ellipsis, index), g)
    return (gx,)


def _fwd_slice(x, start, stop):
    return x[start:stop]


def _bwd_slice(g, out, x, start, stop):
    gx = np.zeros_like(x)
    gx[start:stop] = g
    return (gx,)


def _bwd_concat(g, out, *xs):
    grads, offset = [], 0
    for x in xs:
        grads.append(g[offset:offset + x.shape[0]])
        offset += x.shape[0]
    return tuple(grads)


# name -> (forward(*inputs, **attrs), backward(g, out, *inputs, **attrs))
OPS = {
    "add": (np.add, lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))),
    "sub": (np.subtract, lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))),
    "mul": (np.multiply, lambda g, out, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))),
    "scale": (lambda x, c: x * c, lambda g, out, x, c: (g * c,)),
    "shift": (lambda x, c: x + c, lambda g, out, x, c: (g,)),
    "matmul": (np.matmul, _bwd_matmul),
    "relu": (lambda x: np.maximum(x, 0.0), lambda g, out, x: (g * (x > 0),)),
    "sigmoid": (sigmoid, lambda g, out, x: (g * out * (1.0 - out),)),
    "softmax": (softmax, _bwd_softmax),
    "log": (lambda x, floor: np.log(x + floor), lambda g, out, x, floor: (g / (x + floor),)),
    "sum": (lambda x: np.sum(x), lambda g, out, x: (np.broadcast_to(g, x.shape).copy(),)),
    "mean": (lambda x: np.mean(x), lambda g, out, x: (np.full(x.shape, g / x.size),)),
    "max": (_fwd_max, _bwd_max),
    "take": (_fwd_take, _bwd_take),
    "slice": (_fwd_slice, _bwd_slice),
    "reshape": (lambda x, shape: np.reshape(x, shape), lambda g, out, x, shape: (np.reshape(g, x.shape),)),
    "concat": (lambda *xs: np.concatenate(xs, axis=0), _bwd_concat),
    "transpose": (lambda W: np.swapaxes(W, -1, -2), lambda g, out, W: (np.swapaxes(g, -1, -2),)),
}


@dataclass(frozen=True)
class Record:
    op: str
    inputs: tuple
    output: int
    attrs: tuple = ()


class Var:
    """Handle to a value recorded on a tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape, id_):
        self.tape = tape
        self.id = id_

    @property
    def value(self):
        return self.tape.values[self.id]

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __neg__(self):
        return self.tape.scale(self, -1.0)

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.shape})"


class GradTape:
    """Records ops for later reverse-mode differentiation.

    >>> t = GradTape()
    >>> x = t.leaf([3.0], "x")
    >>> y = t.sum(t.matmul(t.leaf([[2.0]]), x))
    >>> reverse_grad(t, y)["x"]
    array([2.])
    """

    def __init__(self):
        self.records: list[Record] = []
        self.values: list[np.ndarray] = []
        self.leaves: dict[int, object] = {}

    def _new(self, value) -> Var:
        self.values.append(value)
        return Var(self, len(self.values) - 1)

    def leaf(self, value, name=None) -> Var:
        var = self._new(np.asarray(value, dtype=np.float64))
        self.leaves[var.id] = name if name is not None else var.id
        return var

    def _lift(self, x) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise UsageError("Var belongs to a different tape")
            return x
        return self.leaf(x)

    def emit(self, op, *inputs, **attrs) -> Var:
        ins = tuple(self._lift(x) for x in inputs)
        fwd, _ = OPS[op]
        out = fwd(*(v.value for v in ins), **attrs)
        var = self._new(np.asarray(out, dtype=np.float64))
        self.records.append(Record(op, tuple(v.id for v in ins), var.id, tuple(sorted(attrs.items()))))
        return var

    # thin named wrappers so model code reads naturally
    def add(self, a, b):
        return self.emit("add", a, b)

    def sub(self, a, b):
        return self.emit("sub", a, b)

    def mul(self, a, b):
        return self.emit("mul", a, b)

    def scale(self, x, c):
        return self.emit("scale", x, c=float(c))

    def shift(self, x, c):
        return self.emit("shift", x, c=float(c))

    def matmul(self, a, b):
        return self.emit("matmul", a, b)

    def dense(self, W, b, x):
        """``x @ W.T + b`` over the last axis of ``x``."""
        W = self._lift(W)
        x = self._lift(x)
        if x.shape[-1] != W.shape[1]:
            raise DimensionError(f"input width {x.shape[-1]} != weight in_dim {W.shape[1]}", "dense")
        out = self.emit("matmul", x, self.emit("transpose", W))
        return out if b is None else self.add(out, b)

    def relu(self, x):
        return self.emit("relu", x)

    def sigmoid(self, x):
        return self.emit("sigmoid", x)

    def softmax(self, x):
        return self.emit("softmax", x)

    def log(self, x, floor=CE_FLOOR):
        return self.emit("log", x, floor=float(floor))

    def sum(self, x):
        return self.emit("sum", x)

    def mean(self, x):
        return self.emit("mean", x)

    def max(self, x):
        return self.emit("max", x)

    def take(self, x, index):
        return self.emit("take", x, index=index)

    def slice(self, x, start, stop):
        return self.emit("slice", x, start=int(start), stop=int(stop))

    def reshape(self, x, shape):
        return self.emit("reshape", x, shape=tuple(shape))

    def concat(self, *xs):
        return self.emit("concat", *xs)

    def replay(self, leaf_values=None):
        """Re-run every record from the stored (or substituted) leaf values.

        Returns the list of recomputed values indexed like ``self.values``.
        """
        values = list(self.values)
        if leaf_values:
            by_name = {name: vid for vid, name in self.leaves.items()}
            for key, val in leaf_values.items():
                values[by_name[key]] = np.asarray(val, dtype=np.float64)
        for rec in self.records:
            fwd, _ = OPS[rec.op]
            values[rec.output] = np.asarray(
                fwd(*(values[i] for i in rec.inputs), **dict(rec.attrs)), dtype=np.float64)
        return values


def reverse_grad(tape: GradTape, output: Var) -> dict:
    """Gradients of scalar ``output`` w.r.t. every leaf on ``tape``.

    Keys are leaf names (or integer ids for unnamed leaves).
    """
    if output.value.size != 1:
        raise UsageError(f"reverse_grad needs a scalar output, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {output.id: np.ones_like(output.value)}
    for rec in reversed(tape.records):
        g = grads.pop(rec.output, None)
        if g is None:
            continue
        _, bwd = OPS[rec.op]
        ins = [tape.values[i] for i in rec.inputs]
        parts = bwd(g, tape.values[rec.output], *ins, **dict(rec.attrs))
        for vid, part in zip(rec.inputs, parts):
            part = np.asarray(part, dtype=np.float64).reshape(tape.values[vid].shape)
            grads[vid] = grads[vid] + part if vid in grads else part
    return {
        name: grads.get(vid, np.zeros_like(tape.values[vid]))
        for vid, name in tape.leaves.items()
    }


class GradCheck(NamedTuple):
    passed: bool
    max_rel_error: float


def finite_diff_check(fn, point, tol=1e-4, step=1e-5, abs_floor=1e-7) -> GradCheck:
    """Compare an analytic gradient against central differences.

    ``fn(x)`` must return ``(value, grad)``; the gradient is taken at
    ``point`` and the value is re-evaluated at ``x +/- step`` per
    coordinate. Coordinates whose absolute error is within ``abs_floor``
    count as exact, which keeps near-zero gradients from inflating the
    relative error.
    """
    x = np.array(point, dtype=np.float64)
    _, analytic = fn(x)
    analytic = np.asarray(analytic, dtype=np.float64).reshape(x.shape)
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi, _ = fn(x)
        flat[i] = orig - step
        lo, _ = fn(x)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError(f"non-finite evaluation at coordinate {i}")
        num_flat[i] = (float(hi) - float(lo)) / (2 * step)
    abs_err = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(abs_err <= abs_floor, 0.0, abs_err / np.where(denom > 0, denom, 1.0))
    worst = float(rel.max()) if rel.size else 0.0
    return GradCheck(worst <= tol, worst)
