"""Symplectic coupling layers with exact inverses, plus the polar map.

Each layer shears one coordinate block by a gradient field of the other:
even parity maps (q, p) -> (q, p + f(q)), odd parity maps (q, p) ->
(q + f(p), p), with f(x) = C*x + W^T diag(A) tanh(W x + B). Because f is the
gradient of a scalar potential, every layer is symplectic for any parameter
values, and the coupling structure gives an exact algebraic inverse. A stack
of alternating layers followed by the polar map (radius, atan2) realizes the
encoder; the decoder applies the exact inverses in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tape, Var, astensor
from .states import ActionAngleState, CartesianActionState, PhaseState, TWO_PI, wrap_angle

EVEN = "even"
ODD = "odd"


@dataclass
class GSympLayer:
    """One coupling layer; invertible for any parameter values."""

    parity: str
    W: np.ndarray  # [width, n]
    A: np.ndarray  # [width]
    B: np.ndarray  # [width]
    C: np.ndarray  # scalar ()

    def __post_init__(self):
        if self.parity not in (EVEN, ODD):
            raise ValueError(f"parity must be '{EVEN}' or '{ODD}', got {self.parity!r}")
        self.W = astensor(self.W)
        self.A = astensor(self.A)
        self.B = astensor(self.B)
        self.C = astensor(self.C)
        if self.W.ndim != 2 or self.A.shape != (self.W.shape[0],) or self.B.shape != self.A.shape:
            raise ValueError("layer parameter shapes disagree")
        if self.C.shape != ():
            raise ValueError("C must be a scalar")

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def width(self) -> int:
        return self.W.shape[0]


def init_layer(rng: np.random.Generator, n: int, width: int, parity: str) -> GSympLayer:
    """Near-identity initialization: small A and zero C keep f close to zero."""
    return GSympLayer(
        parity=parity,
        W=rng.normal(0.0, 1.0 / np.sqrt(n), size=(width, n)),
        A=rng.normal(0.0, 0.01, size=width),
        B=np.zeros(width),
        C=np.zeros(()),
    )


@dataclass
class FlowStack:
    """Alternating-parity layers starting from even (p updated first)."""

    layers: tuple[GSympLayer, ...]
    n: int

    def __post_init__(self):
        self.layers = tuple(self.layers)
        for k, layer in enumerate(self.layers):
            expect = EVEN if k % 2 == 0 else ODD
            if layer.parity != expect:
                raise ValueError(f"layer {k} has parity {layer.parity}, expected {expect}")
            if layer.n != self.n:
                raise ValueError(f"layer {k} dimension {layer.n} != stack dimension {self.n}")


def init_stack(rng: np.random.Generator, n: int, depth: int, width: int) -> FlowStack:
    layers = [init_layer(rng, n, width, EVEN if k % 2 == 0 else ODD) for k in range(depth)]
    return FlowStack(layers=tuple(layers), n=n)


class BoundLayer:
    """Layer parameters injected on a tape, with per-tape cached helpers."""

    __slots__ = ("W", "A", "B", "C", "Wt", "_reps")

    def __init__(self, tape: Tape, layer: GSympLayer, prefix: str, params: dict[str, Var]):
        self.W = tape.param(layer.W)
        self.A = tape.param(layer.A)
        self.B = tape.param(layer.B)
        self.C = tape.param(layer.C)
        params[f"{prefix}.W"] = self.W
        params[f"{prefix}.A"] = self.A
        params[f"{prefix}.B"] = self.B
        params[f"{prefix}.C"] = self.C
        self.Wt = dc.transpose(self.W)
        self._reps: dict[tuple[str, int], Var] = {}

    def rep(self, which: str, rows: int) -> Var:
        key = (which, rows)
        got = self._reps.get(key)
        if got is None:
            got = dc.repeat_row(self.A if which == "A" else self.B, rows)
            self._reps[key] = got
        return got

    def f(self, x: Var) -> Var:
        """C*x + W^T diag(A) tanh(W x + B) on a batch [rows, n]."""
        rows = x.shape[0]
        h = dc.tanh(dc.matmul(x, self.Wt) + self.rep("B", rows))
        out = dc.matmul(dc.mul(h, self.rep("A", rows)), self.W)
        return out + dc.scalar_mul(self.C, x)

    def forward(self, q: Var, p: Var, parity: str) -> tuple[Var, Var]:
        if parity == EVEN:
            return q, p + self.f(q)
        return q + self.f(p), p

    def inverse(self, q: Var, p: Var, parity: str) -> tuple[Var, Var]:
        if parity == EVEN:
            return q, p - self.f(q)
        return q - self.f(p), p


class BoundStack:
    __slots__ = ("layers", "parities")

    def __init__(self, tape: Tape, stack: FlowStack, prefix: str, params: dict[str, Var]):
        self.layers = [
            BoundLayer(tape, layer, f"{prefix}.{k}", params) for k, layer in enumerate(stack.layers)
        ]
        self.parities = [layer.parity for layer in stack.layers]

    def forward(self, q: Var, p: Var) -> tuple[Var, Var]:
        for bound, parity in zip(self.layers, self.parities):
            q, p = bound.forward(q, p, parity)
        return q, p

    def inverse(self, q: Var, p: Var) -> tuple[Var, Var]:
        for bound, parity in zip(reversed(self.layers), reversed(self.parities)):
            q, p = bound.inverse(q, p, parity)
        return q, p


def _as_batch(x: np.ndarray) -> np.ndarray:
    arr = astensor(x)
    return arr[None, :] if arr.ndim == 1 else arr


def _run_layer(layer: GSympLayer, q: np.ndarray, p: np.ndarray, inverse: bool):
    tape = Tape()
    bound = BoundLayer(tape, layer, "layer", {})
    qv, pv = tape.const(_as_batch(q)), tape.const(_as_batch(p))
    step = bound.inverse if inverse else bound.forward
    q2, p2 = step(qv, pv, layer.parity)
    return q2.value, p2.value


def layer_forward(layer: GSympLayer, state: PhaseState) -> PhaseState:
    if state.n != layer.n:
        raise ValueError(f"state dimension {state.n} != layer dimension {layer.n}")
    q, p = _run_layer(layer, state.q, state.p, inverse=False)
    return PhaseState(q[0], p[0])


def layer_inverse(layer: GSympLayer, state: PhaseState) -> PhaseState:
    if state.n != layer.n:
        raise ValueError(f"state dimension {state.n} != layer dimension {layer.n}")
    q, p = _run_layer(layer, state.q, state.p, inverse=True)
    return PhaseState(q[0], p[0])


def _run_stack(stack: FlowStack, q: np.ndarray, p: np.ndarray, inverse: bool):
    tape = Tape()
    bound = BoundStack(tape, stack, "flow", {})
    qv, pv = tape.const(q), tape.const(p)
    q2, p2 = (bound.inverse if inverse else bound.forward)(qv, pv)
    return q2.value, p2.value


def stack_forward(stack: FlowStack, state: PhaseState) -> PhaseState:
    if state.n != stack.n:
        raise ValueError(f"state dimension {state.n} != stack dimension {stack.n}")
    q, p = _run_stack(stack, _as_batch(state.q), _as_batch(state.p), inverse=False)
    return PhaseState(q[0], p[0])


def stack_inverse(stack: FlowStack, state: PhaseState) -> PhaseState:
    if state.n != stack.n:
        raise ValueError(f"state dimension {state.n} != stack dimension {stack.n}")
    q, p = _run_stack(stack, _as_batch(state.q), _as_batch(state.p), inverse=True)
    return PhaseState(q[0], p[0])


def stack_forward_batch(stack: FlowStack, Q: np.ndarray, P: np.ndarray):
    return _run_stack(stack, _as_batch(Q), _as_batch(P), inverse=False)


def stack_inverse_batch(stack: FlowStack, Q: np.ndarray, P: np.ndarray):
    return _run_stack(stack, _as_batch(Q), _as_batch(P), inverse=True)


def polar_vars(ix: Var, iy: Var) -> tuple[Var, Var]:
    """(Ix, Iy) -> (I, theta) with theta unwrapped in (-pi, pi]."""
    radius = dc.sqrt(dc.square(ix) + dc.square(iy))
    theta = dc.atan2(iy, ix)
    return radius, theta


def unpolar_vars(radius: Var, theta: Var) -> tuple[Var, Var]:
    """(I, theta) -> (Ix, Iy); 2*pi-periodic in theta."""
    return dc.mul(radius, dc.cos(theta)), dc.mul(radius, dc.sin(theta))


def to_polar(c: CartesianActionState) -> ActionAngleState:
    radius = np.hypot(c.Ix, c.Iy)
    theta = np.arctan2(c.Iy, c.Ix)
    theta[radius < dc.ORIGIN_EPS] = 0.0
    return ActionAngleState(I=radius, theta=wrap_angle(theta))


def from_polar(a: ActionAngleState) -> CartesianActionState:
    if np.any(a.I < 0):
        raise ValueError("actions must be nonnegative")
    return CartesianActionState(Ix=a.I * np.cos(a.theta), Iy=a.I * np.sin(a.theta))


def symplectic_form(n: int) -> np.ndarray:
    """Standard form on (q, p) ordering: [[0, I], [-I, 0]]."""
    omega = np.zeros((2 * n, 2 * n))
    omega[:n, n:] = np.eye(n)
    omega[n:, :n] = -np.eye(n)
    return omega


def numerical_jacobian(fn, z: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of fn: R^d -> R^d at z."""
    d = z.shape[0]
    jac = np.zeros((d, d))
    for j in range(d):
        zp, zm = z.copy(), z.copy()
        zp[j] += h
        zm[j] -= h
        jac[:, j] = (fn(zp) - fn(zm)) / (2.0 * h)
    return jac


def symplecticity_check(stack: FlowStack, point: PhaseState, h: float = 1e-5) -> float:
    """Max-abs entry of J^T Omega J - Omega for the finite-difference Jacobian."""
    n = stack.n

    def fn(z: np.ndarray) -> np.ndarray:
        q, p = _run_stack(stack, z[None, :n], z[None, n:], inverse=False)
        return np.concatenate([q[0], p[0]])

    z0 = np.concatenate([point.q, point.p])
    jac = numerical_jacobian(fn, z0, h)
    omega = symplectic_form(n)
    return float(np.abs(jac.T @ omega @ jac - omega).max())
