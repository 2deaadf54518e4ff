"""The action-angle simulator: encode, evolve linearly, decode.

The encoder is a symplectic flow whose output blocks are read as Cartesian
action components (position block -> Ix, momentum block -> Iy, paired
index-wise) and converted to (I, theta) by the polar map. A small MLP maps
actions to angular velocities; a prediction over any time jump is a single
Euler update of the angles, so inference cost does not depend on the jump.
The 2*pi wrap of angles is applied only on reported states, never inside the
differentiable path (the decoder is periodic in theta, so the unwrapped angle
decodes to the same state).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tape, Var, astensor
from .flows import BoundStack, FlowStack, init_stack, polar_vars, unpolar_vars
from .states import ActionAngleState, PhaseState, wrap_angle

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Checkpoint file is unreadable or disagrees with the expected model."""


@dataclass
class Mlp:
    """Fully connected tanh network; linear final layer."""

    weights: tuple[np.ndarray, ...]  # layer k: [out_k, in_k]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        self.weights = tuple(astensor(w) for w in self.weights)
        self.biases = tuple(astensor(b) for b in self.biases)
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases count differ")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError("MLP parameter shapes disagree")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def init_mlp(rng: np.random.Generator, sizes: list[int], zero_final: bool = False) -> Mlp:
    weights, biases = [], []
    for k, (d_in, d_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        if last and zero_final:
            weights.append(np.zeros((d_out, d_in)))
        else:
            weights.append(rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_out, d_in)))
        biases.append(np.zeros(d_out))
    return Mlp(weights=tuple(weights), biases=tuple(biases))


class BoundMlp:
    __slots__ = ("weights", "biases", "_wts", "_reps")

    def __init__(self, tape: Tape, mlp: Mlp, prefix: str, params: dict[str, Var]):
        self.weights = [tape.param(w) for w in mlp.weights]
        self.biases = [tape.param(b) for b in mlp.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"{prefix}.w{k}"] = w
            params[f"{prefix}.b{k}"] = b
        self._wts = [dc.transpose(w) for w in self.weights]
        self._reps: dict[tuple[int, int], Var] = {}

    def _bias(self, k: int, rows: int) -> Var:
        key = (k, rows)
        got = self._reps.get(key)
        if got is None:
            got = dc.repeat_row(self.biases[k], rows)
            self._reps[key] = got
        return got

    def forward(self, x: Var) -> Var:
        rows = x.shape[0]
        last = len(self.weights) - 1
        for k, wt in enumerate(self._wts):
            x = dc.matmul(x, wt) + self._bias(k, rows)
            if k != last:
                x = dc.tanh(x)
        return x


@dataclass
class AanConfig:
    n: int = 2
    flow_depth: int = 8
    flow_width: int = 256
    head_hidden: tuple[int, ...] = (32,)
    seed: int = 0


@dataclass
class ActionAngleNetwork:
    """Symplectic-flow encoder plus an action-conditioned dynamics head."""

    flow: FlowStack
    head: Mlp
    n: int
    f_calls: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.flow.n != self.n:
            raise ValueError("flow dimension disagrees with model dimension")
        sizes = self.head.sizes
        if sizes[0] != self.n or sizes[-1] != self.n:
            raise ValueError("dynamics head must map actions [n] to rates [n]")

    @property
    def kind(self) -> str:
        return "action-angle"

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for k, layer in enumerate(self.flow.layers):
            out += [
                (f"flow.{k}.W", layer.W),
                (f"flow.{k}.A", layer.A),
                (f"flow.{k}.B", layer.B),
                (f"flow.{k}.C", layer.C),
            ]
        for k, (w, b) in enumerate(zip(self.head.weights, self.head.biases)):
            out += [(f"head.w{k}", w), (f"head.b{k}", b)]
        return out

    def num_params(self) -> int:
        return sum(arr.size for _, arr in self.parameters())

    def bind(self, tape: Tape) -> "BoundAan":
        return BoundAan(tape, self)


class BoundAan:
    __slots__ = ("net", "flow", "head", "params")

    def __init__(self, tape: Tape, net: ActionAngleNetwork):
        self.net = net
        self.params: dict[str, Var] = {}
        self.flow = BoundStack(tape, net.flow, "flow", self.params)
        self.head = BoundMlp(tape, net.head, "head", self.params)

    def encode(self, q: Var, p: Var) -> tuple[Var, Var]:
        """(q, p) [rows, n] -> (I, theta) with theta unwrapped."""
        ix, iy = self.flow.forward(q, p)
        return polar_vars(ix, iy)

    def rates(self, actions: Var) -> Var:
        self.net.f_calls += 1
        return self.head.forward(actions)

    def decode(self, actions: Var, theta: Var) -> tuple[Var, Var]:
        ix, iy = unpolar_vars(actions, theta)
        return self.flow.inverse(ix, iy)

    def predict_full(self, q: Var, p: Var, dt: float) -> tuple[Var, Var, Var]:
        """Returns (q', p', I); actions pass through the jump untouched."""
        actions, theta = self.encode(q, p)
        theta2 = theta + dc.smul(float(dt), self.rates(actions))
        q2, p2 = self.decode(actions, theta2)
        return q2, p2, actions

    def predict(self, q: Var, p: Var, dt: float) -> tuple[Var, Var]:
        q2, p2, _ = self.predict_full(q, p, dt)
        return q2, p2


def build_action_angle_network(cfg: AanConfig) -> ActionAngleNetwork:
    rng = np.random.default_rng(cfg.seed)
    flow = init_stack(rng, cfg.n, cfg.flow_depth, cfg.flow_width)
    head = init_mlp(rng, [cfg.n, *cfg.head_hidden, cfg.n], zero_final=True)
    return ActionAngleNetwork(flow=flow, head=head, n=cfg.n)


def _batch(x: np.ndarray) -> np.ndarray:
    arr = astensor(x)
    return arr[None, :] if arr.ndim == 1 else arr


def encode(net: ActionAngleNetwork, state: PhaseState) -> ActionAngleState:
    if state.n != net.n:
        raise ValueError(f"state dimension {state.n} != model dimension {net.n}")
    tape = Tape()
    bound = net.bind(tape)
    actions, theta = bound.encode(tape.const(_batch(state.q)), tape.const(_batch(state.p)))
    return ActionAngleState(I=actions.value[0], theta=wrap_angle(theta.value[0]))


def angular_velocity(net: ActionAngleNetwork, actions: np.ndarray) -> np.ndarray:
    arr = _batch(actions)
    tape = Tape()
    bound = net.bind(tape)
    out = bound.rates(tape.const(arr)).value
    return out[0] if astensor(actions).ndim == 1 else out


def evolve(net: ActionAngleNetwork, a: ActionAngleState, dt: float) -> ActionAngleState:
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    theta_dot = angular_velocity(net, a.I)
    return ActionAngleState(I=a.I, theta=wrap_angle(a.theta + theta_dot * float(dt)))


def decode(net: ActionAngleNetwork, a: ActionAngleState) -> PhaseState:
    if np.any(a.I < 0):
        raise ValueError("actions must be nonnegative")
    tape = Tape()
    bound = net.bind(tape)
    q, p = bound.decode(tape.const(_batch(a.I)), tape.const(_batch(a.theta)))
    return PhaseState(q.value[0], p.value[0])


def predict(net: ActionAngleNetwork, state: PhaseState, dt: float) -> PhaseState:
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    q, p = predict_batch(net, state.q[None, :], state.p[None, :], dt)
    return PhaseState(q[0], p[0])


def predict_batch(model, Q: np.ndarray, P: np.ndarray, dt: float):
    """Plain-array prediction for any model exposing bind()."""
    tape = Tape()
    bound = model.bind(tape)
    q, p = bound.predict(tape.const(_batch(Q)), tape.const(_batch(P)), float(dt))
    return q.value, p.value


# --- checkpoint format (shared by the baseline models) ---


def _encode_array(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": [f"{v:.17g}" for v in arr.reshape(-1)],
    }


def _decode_array(spec: dict, name: str) -> np.ndarray:
    try:
        shape = tuple(spec["shape"])
        data = np.array([float(v) for v in spec["data"]], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt parameter entry '{name}': {exc}") from exc
    if data.size != int(np.prod(shape, dtype=int)):
        raise CheckpointError(f"parameter '{name}' data length does not match shape {shape}")
    return data.reshape(shape)


def write_checkpoint(path, kind: str, arch: dict, params: list[tuple[str, np.ndarray]]) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": kind,
        "arch": arch,
        "params": {name: _encode_array(arr) for name, arr in params},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_checkpoint(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointError(f"{path} is not a checkpoint file")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc['format_version']} unsupported (expected {CHECKPOINT_VERSION})"
        )
    for key in ("model_kind", "arch", "params"):
        if key not in doc:
            raise CheckpointError(f"checkpoint missing field '{key}'")
    return doc


def _load_params(doc: dict, expected: list[tuple[str, np.ndarray]]) -> None:
    """Copy checkpoint arrays into the model's parameter storage, in place."""
    params = doc["params"]
    for name, arr in expected:
        if name not in params:
            raise CheckpointError(f"checkpoint missing parameter '{name}'")
        loaded = _decode_array(params[name], name)
        if loaded.shape != arr.shape:
            raise CheckpointError(
                f"parameter '{name}' has shape {loaded.shape}, model expects {arr.shape}"
            )
        arr[...] = loaded
    extra = set(params) - {name for name, _ in expected}
    if extra:
        raise CheckpointError(f"checkpoint has unexpected parameters: {sorted(extra)}")


def checkpoint_save(net: ActionAngleNetwork, path) -> None:
    arch = {
        "n": net.n,
        "flow_depth": len(net.flow.layers),
        "flow_width": net.flow.layers[0].width if net.flow.layers else 0,
        "head_sizes": list(net.head.sizes),
    }
    write_checkpoint(path, net.kind, arch, net.parameters())


def checkpoint_load(path, cfg: AanConfig | None = None) -> ActionAngleNetwork:
    doc = read_checkpoint(path)
    if doc["model_kind"] != "action-angle":
        raise CheckpointError(f"checkpoint holds a '{doc['model_kind']}' model, not 'action-angle'")
    arch = doc["arch"]
    try:
        loaded_cfg = AanConfig(
            n=int(arch["n"]),
            flow_depth=int(arch["flow_depth"]),
            flow_width=int(arch["flow_width"]),
            head_hidden=tuple(int(h) for h in arch["head_sizes"][1:-1]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt architecture metadata: {exc}") from exc
    if cfg is not None:
        for field_name in ("n", "flow_depth", "flow_width", "head_hidden"):
            if getattr(cfg, field_name) != getattr(loaded_cfg, field_name):
                raise CheckpointError(
                    f"architecture mismatch on '{field_name}': checkpoint has "
                    f"{getattr(loaded_cfg, field_name)}, config expects {getattr(cfg, field_name)}"
                )
    net = build_action_angle_network(loaded_cfg)
    _load_params(doc, net.parameters())
    return net
