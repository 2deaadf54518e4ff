"""Comparison models trained on the same pipeline.

The Euler update network encodes the state into a latent of the same size,
takes one forward-Euler step of a learned vector field, and decodes; its
inference cost is constant in dt. The neural-ODE variant integrates the same
kind of latent field with classical fixed-step RK4, so its cost grows
linearly with dt. Encoders and decoders are residual MLPs whose output
layers start at zero, making both coders exact identities at initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tape, Var
from .model import (
    BoundMlp,
    CheckpointError,
    Mlp,
    init_mlp,
    read_checkpoint,
    write_checkpoint,
    _load_params,
)
from .states import PhaseState

EUN_KIND = "eun"
NODE_KIND = "neural-ode"


@dataclass
class LatentCoder:
    """Residual encoder/decoder pair on the flat (q, p) vector."""

    encoder: Mlp
    decoder: Mlp


@dataclass
class EunConfig:
    n: int = 2
    hidden: tuple[int, ...] = (320,)
    seed: int = 0


@dataclass
class NodeConfig:
    n: int = 2
    hidden: tuple[int, ...] = (176, 176)
    h0: float = 0.1  # base RK4 substep
    seed: int = 0


@dataclass
class EulerUpdateNetwork:
    coder: LatentCoder
    field_net: Mlp  # latent vector field
    n: int
    f_calls: int = field(default=0, compare=False)

    @property
    def kind(self) -> str:
        return EUN_KIND

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return _coder_params(self.coder) + _mlp_params("field", self.field_net)

    def num_params(self) -> int:
        return sum(arr.size for _, arr in self.parameters())

    def bind(self, tape: Tape) -> "BoundEun":
        return BoundEun(tape, self)


@dataclass
class NeuralOde:
    coder: LatentCoder
    field_net: Mlp
    n: int
    h0: float = 0.1
    f_calls: int = field(default=0, compare=False)

    @property
    def kind(self) -> str:
        return NODE_KIND

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return _coder_params(self.coder) + _mlp_params("field", self.field_net)

    def num_params(self) -> int:
        return sum(arr.size for _, arr in self.parameters())

    def bind(self, tape: Tape) -> "BoundNode":
        return BoundNode(tape, self)


def _mlp_params(prefix: str, mlp: Mlp) -> list[tuple[str, np.ndarray]]:
    out = []
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out += [(f"{prefix}.w{k}", w), (f"{prefix}.b{k}", b)]
    return out


def _coder_params(coder: LatentCoder) -> list[tuple[str, np.ndarray]]:
    return _mlp_params("encoder", coder.encoder) + _mlp_params("decoder", coder.decoder)


def _init_coder(rng: np.random.Generator, n: int, hidden: tuple[int, ...]) -> LatentCoder:
    sizes = [2 * n, *hidden, 2 * n]
    return LatentCoder(
        encoder=init_mlp(rng, sizes, zero_final=True),
        decoder=init_mlp(rng, sizes, zero_final=True),
    )


def build_eun(cfg: EunConfig) -> EulerUpdateNetwork:
    rng = np.random.default_rng(cfg.seed)
    coder = _init_coder(rng, cfg.n, cfg.hidden)
    field_net = init_mlp(rng, [2 * cfg.n, *cfg.hidden, 2 * cfg.n], zero_final=True)
    return EulerUpdateNetwork(coder=coder, field_net=field_net, n=cfg.n)


def build_neural_ode(cfg: NodeConfig) -> NeuralOde:
    rng = np.random.default_rng(cfg.seed)
    coder = _init_coder(rng, cfg.n, cfg.hidden)
    field_net = init_mlp(rng, [2 * cfg.n, *cfg.hidden, 2 * cfg.n], zero_final=True)
    return NeuralOde(coder=coder, field_net=field_net, n=cfg.n, h0=cfg.h0)


class _BoundLatentModel:
    __slots__ = ("net", "params", "encoder", "decoder", "field")

    def __init__(self, tape: Tape, net):
        self.net = net
        self.params: dict[str, Var] = {}
        self.encoder = BoundMlp(tape, net.coder.encoder, "encoder", self.params)
        self.decoder = BoundMlp(tape, net.coder.decoder, "decoder", self.params)
        self.field = BoundMlp(tape, net.field_net, "field", self.params)

    def encode(self, q: Var, p: Var) -> Var:
        u = dc.vconcat(q, p)
        return u + self.encoder.forward(u)

    def decode(self, latent: Var) -> tuple[Var, Var]:
        n = self.net.n
        u = latent + self.decoder.forward(latent)
        return dc.vslice(u, 0, n), dc.vslice(u, n, 2 * n)

    def vector_field(self, latent: Var) -> Var:
        self.net.f_calls += 1
        return self.field.forward(latent)


class BoundEun(_BoundLatentModel):
    def predict(self, q: Var, p: Var, dt: float) -> tuple[Var, Var]:
        latent = self.encode(q, p)
        latent = latent + dc.smul(float(dt), self.vector_field(latent))
        return self.decode(latent)


def rk4_step(field, state: Var, h: float) -> Var:
    """One classical four-stage Runge-Kutta update of `state`."""
    h = float(h)
    k1 = field(state)
    k2 = field(state + dc.smul(h / 2.0, k1))
    k3 = field(state + dc.smul(h / 2.0, k2))
    k4 = field(state + dc.smul(h, k3))
    incr = k1 + dc.smul(2.0, k2) + dc.smul(2.0, k3) + k4
    return state + dc.smul(h / 6.0, incr)


def substep_count(dt: float, h0: float) -> int:
    """Number of fixed RK4 substeps covering dt at base step h0."""
    if dt <= 0:
        return 1
    return max(1, math.ceil(dt / h0 - 1e-9))


class BoundNode(_BoundLatentModel):
    def predict(self, q: Var, p: Var, dt: float, steps: int | None = None) -> tuple[Var, Var]:
        latent = self.encode(q, p)
        if dt > 0:
            if steps is None:
                steps = substep_count(dt, self.net.h0)
            h = float(dt) / steps
            for _ in range(steps):
                latent = rk4_step(self.vector_field, latent, h)
                if not np.all(np.isfinite(latent.value)):
                    raise ArithmeticError(f"latent state diverged during integration (dt={dt})")
        return self.decode(latent)


def _to_batch(state: PhaseState):
    return state.q[None, :], state.p[None, :]


def eun_predict(model: EulerUpdateNetwork, u: PhaseState, dt: float) -> PhaseState:
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    tape = Tape()
    q, p = model.bind(tape).predict(*(tape.const(x) for x in _to_batch(u)), float(dt))
    return PhaseState(q.value[0], p.value[0])


def node_predict(model: NeuralOde, u: PhaseState, dt: float, steps: int | None = None) -> PhaseState:
    if dt < 0 or (steps is not None and steps < 1):
        raise ValueError("dt must be nonnegative and steps >= 1")
    tape = Tape()
    q, p = model.bind(tape).predict(*(tape.const(x) for x in _to_batch(u)), float(dt), steps)
    return PhaseState(q.value[0], p.value[0])


# --- checkpoints ---


def baseline_save(model, path) -> None:
    arch = {
        "n": model.n,
        "hidden": list(model.field_net.sizes[1:-1]),
    }
    if model.kind == NODE_KIND:
        arch["h0"] = model.h0
    write_checkpoint(path, model.kind, arch, model.parameters())


def baseline_load(path):
    doc = read_checkpoint(path)
    kind = doc["model_kind"]
    arch = doc["arch"]
    try:
        n = int(arch["n"])
        hidden = tuple(int(h) for h in arch["hidden"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt architecture metadata: {exc}") from exc
    if kind == EUN_KIND:
        model = build_eun(EunConfig(n=n, hidden=hidden))
    elif kind == NODE_KIND:
        model = build_neural_ode(NodeConfig(n=n, hidden=hidden, h0=float(arch.get("h0", 0.1))))
    else:
        raise CheckpointError(f"unknown baseline kind '{kind}'")
    _load_params(doc, model.parameters())
    return model
