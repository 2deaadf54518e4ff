"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Computations are recorded on a :class:`Tape` as an append-only list of nodes;
:func:`backward` replays the tape in reverse to accumulate gradients of a
scalar loss with respect to every parameter leaf. Values are plain numpy
arrays (64-bit, C order). There is no broadcasting beyond scalar*tensor:
every op kind has an explicit shape rule, checked at record time. Batched
computation goes through explicit kinds (``matmul``, ``repeat_row``,
``mean_rows``) instead of implicit broadcast semantics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShapeError",
    "Tape",
    "Var",
    "astensor",
    "backward",
    "add",
    "sub",
    "mul",
    "smul",
    "scalar_mul",
    "matvec",
    "matvec_t",
    "matmul",
    "transpose",
    "repeat_row",
    "mean_rows",
    "tanh",
    "sin",
    "cos",
    "sqrt",
    "square",
    "atan2",
    "vsum",
    "vmean",
    "vconcat",
    "vslice",
]

# Below this radius the atan2 and sqrt adjoints are zeroed instead of
# dividing by ~0; keeps gradients finite when actions pass near the origin.
ORIGIN_EPS = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible with the op kind."""


def astensor(x, checked: bool = True) -> np.ndarray:
    """Coerce to a C-order float64 array, rejecting NaN/Inf when checked."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim > 0:
        arr = np.ascontiguousarray(arr)
    if checked and not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


@dataclass(frozen=True, slots=True)
class Node:
    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    aux: object
    requires: bool


class Tape:
    """Append-only record of operations; node ids index into ``nodes``."""

    __slots__ = ("nodes",)

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def record(self, op: str, inputs: tuple[int, ...], value: np.ndarray, aux=None) -> int:
        nid = len(self.nodes)
        for i in inputs:
            if not 0 <= i < nid:
                raise ValueError(f"input id {i} not on tape")
        requires = any(self.nodes[i].requires for i in inputs)
        self.nodes.append(Node(op, inputs, value, aux, requires))
        return nid

    def const(self, value) -> "Var":
        arr = astensor(value)
        nid = len(self.nodes)
        self.nodes.append(Node("const", (), arr, None, False))
        return Var(self, nid)

    def param(self, value) -> "Var":
        arr = astensor(value)
        nid = len(self.nodes)
        self.nodes.append(Node("param", (), arr, None, True))
        return Var(self, nid)


@dataclass(frozen=True, slots=True)
class Var:
    """Handle to a tape node."""

    tape: Tape
    nid: int

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.nid].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tape.nodes[self.nid].value.shape

    def __add__(self, other: "Var") -> "Var":
        return add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return mul(self, other)
        return smul(float(other), self)

    __rmul__ = __mul__


def _same_tape(*vs: Var) -> Tape:
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise ValueError("operands live on different tapes")
    return tape


def _binary_same_shape(op: str, a: Var, b: Var, fn) -> Var:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")
    tape = _same_tape(a, b)
    return Var(tape, tape.record(op, (a.nid, b.nid), fn(a.value, b.value)))


def add(a: Var, b: Var) -> Var:
    return _binary_same_shape("add", a, b, np.add)


def sub(a: Var, b: Var) -> Var:
    return _binary_same_shape("sub", a, b, np.subtract)


def mul(a: Var, b: Var) -> Var:
    return _binary_same_shape("mul", a, b, np.multiply)


def smul(c: float, x: Var) -> Var:
    """Multiply by a python float constant (not differentiated through c)."""
    c = float(c)
    return Var(x.tape, x.tape.record("smul", (x.nid,), c * x.value, c))


def scalar_mul(s: Var, x: Var) -> Var:
    """Scalar tape node times tensor; the one sanctioned broadcast."""
    if s.shape != ():
        raise ShapeError(f"scalar_mul: scale has shape {s.shape}, expected ()")
    tape = _same_tape(s, x)
    return Var(tape, tape.record("scalar_mul", (s.nid, x.nid), s.value * x.value))


def matvec(w: Var, x: Var) -> Var:
    """W[m,n] @ x[n] -> [m]."""
    if w.value.ndim != 2 or x.value.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {w.shape} @ {x.shape}")
    tape = _same_tape(w, x)
    return Var(tape, tape.record("matvec", (w.nid, x.nid), w.value @ x.value))


def matvec_t(w: Var, y: Var) -> Var:
    """W[m,n] transpose-applied to y[m] -> [n]."""
    if w.value.ndim != 2 or y.value.ndim != 1 or w.shape[0] != y.shape[0]:
        raise ShapeError(f"matvec_t: incompatible shapes {w.shape}^T @ {y.shape}")
    tape = _same_tape(w, y)
    return Var(tape, tape.record("matvec_t", (w.nid, y.nid), w.value.T @ y.value))


def matmul(a: Var, b: Var) -> Var:
    """A[m,k] @ B[k,n] -> [m,n]."""
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    tape = _same_tape(a, b)
    return Var(tape, tape.record("matmul", (a.nid, b.nid), a.value @ b.value))


def transpose(a: Var) -> Var:
    if a.value.ndim != 2:
        raise ShapeError(f"transpose: expected matrix, got shape {a.shape}")
    return Var(a.tape, a.tape.record("transpose", (a.nid,), np.ascontiguousarray(a.value.T)))


def repeat_row(v: Var, rows: int) -> Var:
    """Stack a vector [d] into a matrix [rows, d]; adjoint sums over rows."""
    if v.value.ndim != 1:
        raise ShapeError(f"repeat_row: expected vector, got shape {v.shape}")
    if rows < 1:
        raise ShapeError("repeat_row: rows must be >= 1")
    value = np.tile(v.value, (rows, 1))
    return Var(v.tape, v.tape.record("repeat_row", (v.nid,), value, rows))


def mean_rows(m: Var) -> Var:
    """Column means of a matrix [r, c] -> [c]."""
    if m.value.ndim != 2:
        raise ShapeError(f"mean_rows: expected matrix, got shape {m.shape}")
    return Var(m.tape, m.tape.record("mean_rows", (m.nid,), m.value.mean(axis=0)))


def _unary(op: str, x: Var, value: np.ndarray) -> Var:
    return Var(x.tape, x.tape.record(op, (x.nid,), value))


def tanh(x: Var) -> Var:
    return _unary("tanh", x, np.tanh(x.value))


def sin(x: Var) -> Var:
    return _unary("sin", x, np.sin(x.value))


def cos(x: Var) -> Var:
    return _unary("cos", x, np.cos(x.value))


def sqrt(x: Var) -> Var:
    return _unary("sqrt", x, np.sqrt(x.value))


def square(x: Var) -> Var:
    return _unary("square", x, np.square(x.value))


def atan2(y: Var, x: Var) -> Var:
    return _binary_same_shape("atan2", y, x, np.arctan2)


def vsum(x: Var) -> Var:
    return Var(x.tape, x.tape.record("vsum", (x.nid,), np.asarray(x.value.sum())))


def vmean(x: Var) -> Var:
    return Var(x.tape, x.tape.record("vmean", (x.nid,), np.asarray(x.value.mean())))


def vconcat(a: Var, b: Var) -> Var:
    """Concatenate along the last axis."""
    va, vb = a.value, b.value
    if va.ndim != vb.ndim or va.shape[:-1] != vb.shape[:-1]:
        raise ShapeError(f"vconcat: shapes {a.shape} and {b.shape} disagree off-axis")
    tape = _same_tape(a, b)
    value = np.concatenate([va, vb], axis=-1)
    return Var(tape, tape.record("vconcat", (a.nid, b.nid), value, va.shape[-1]))


def vslice(x: Var, lo: int, hi: int) -> Var:
    """Slice [lo:hi] along the last axis."""
    d = x.shape[-1]
    if not 0 <= lo < hi <= d:
        raise ShapeError(f"vslice: bounds [{lo}:{hi}] invalid for axis of length {d}")
    value = np.ascontiguousarray(x.value[..., lo:hi])
    return Var(x.tape, x.tape.record("vslice", (x.nid,), value, (lo, hi)))


def _adj_sqrt(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    out = np.zeros_like(g)
    np.divide(g, 2.0 * y, out=out, where=y >= ORIGIN_EPS)
    return out


def _adj_atan2(yv: np.ndarray, xv: np.ndarray, g: np.ndarray):
    denom = xv * xv + yv * yv
    ok = denom >= ORIGIN_EPS * ORIGIN_EPS
    gy = np.zeros_like(g)
    gx = np.zeros_like(g)
    np.divide(g * xv, denom, out=gy, where=ok)
    np.divide(-g * yv, denom, out=gx, where=ok)
    return gy, gx


def backward(loss: Var) -> dict[int, np.ndarray]:
    """Gradients of a scalar loss for every reachable parameter node.

    Returns a mapping from parameter node id to an array of the parameter's
    shape; parameters the loss does not depend on are absent (zero gradient).
    """
    if loss.shape != ():
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss.tape
    nodes = tape.nodes
    grads: list[np.ndarray | None] = [None] * len(nodes)
    if not nodes[loss.nid].requires:
        return {}
    grads[loss.nid] = np.ones(())

    def acc(i: int, contrib: np.ndarray) -> None:
        if not nodes[i].requires:
            return
        if grads[i] is None:
            grads[i] = contrib.copy()
        else:
            grads[i] += contrib

    result: dict[int, np.ndarray] = {}
    for nid in range(loss.nid, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        node = nodes[nid]
        op = node.op
        if op == "param":
            result[nid] = g
            continue
        if op == "const":
            continue
        ins = node.inputs
        if op == "add":
            acc(ins[0], g)
            acc(ins[1], g)
        elif op == "sub":
            acc(ins[0], g)
            acc(ins[1], -g)
        elif op == "mul":
            acc(ins[0], g * nodes[ins[1]].value)
            acc(ins[1], g * nodes[ins[0]].value)
        elif op == "smul":
            acc(ins[0], node.aux * g)
        elif op == "scalar_mul":
            acc(ins[0], np.asarray((g * nodes[ins[1]].value).sum()))
            acc(ins[1], nodes[ins[0]].value * g)
        elif op == "matvec":
            acc(ins[0], np.outer(g, nodes[ins[1]].value))
            acc(ins[1], nodes[ins[0]].value.T @ g)
        elif op == "matvec_t":
            acc(ins[0], np.outer(nodes[ins[1]].value, g))
            acc(ins[1], nodes[ins[0]].value @ g)
        elif op == "matmul":
            acc(ins[0], g @ nodes[ins[1]].value.T)
            acc(ins[1], nodes[ins[0]].value.T @ g)
        elif op == "transpose":
            acc(ins[0], np.ascontiguousarray(g.T))
        elif op == "repeat_row":
            acc(ins[0], g.sum(axis=0))
        elif op == "mean_rows":
            r = nodes[ins[0]].value.shape[0]
            acc(ins[0], np.tile(g / r, (r, 1)))
        elif op == "tanh":
            acc(ins[0], g * (1.0 - node.value * node.value))
        elif op == "sin":
            acc(ins[0], g * np.cos(nodes[ins[0]].value))
        elif op == "cos":
            acc(ins[0], -g * np.sin(nodes[ins[0]].value))
        elif op == "sqrt":
            acc(ins[0], _adj_sqrt(node.value, g))
        elif op == "square":
            acc(ins[0], 2.0 * g * nodes[ins[0]].value)
        elif op == "atan2":
            gy, gx = _adj_atan2(nodes[ins[0]].value, nodes[ins[1]].value, g)
            acc(ins[0], gy)
            acc(ins[1], gx)
        elif op == "vsum":
            acc(ins[0], np.full(nodes[ins[0]].value.shape, float(g)))
        elif op == "vmean":
            acc(ins[0], np.full(nodes[ins[0]].value.shape, float(g) / nodes[ins[0]].value.size))
        elif op == "vconcat":
            split = node.aux
            acc(ins[0], np.ascontiguousarray(g[..., :split]))
            acc(ins[1], np.ascontiguousarray(g[..., split:]))
        elif op == "vslice":
            lo, hi = node.aux
            full = np.zeros(nodes[ins[0]].value.shape)
            full[..., lo:hi] = g
            acc(ins[0], full)
        else:
            raise ValueError(f"unknown op kind '{op}'")
        grads[nid] = None
    return result
