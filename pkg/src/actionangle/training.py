"""Training loop: weighted prediction loss, action-variance regularizer,
linearly growing time-jump curriculum, Adam.

Each step samples one jump dt = U(0,1) * (step/max_steps) * dt_max, rounds it
to the nearest multiple of the trajectory's sampling interval so every target
is an actual sample (no interpolation), draws a batch of start indices whose
targets stay inside the training range, and minimizes
mean_b (1/(1+dt)) * |predict(u_b, dt) - target_b|^2 plus lam times the mean
per-component population variance of the predicted actions across the batch.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import diffcore as dc
from .diffcore import Tape, backward
from .states import PhaseState
from .systems import Trajectory


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the offending step's diagnostics."""

    def __init__(self, step: int, dt: float, l_predict: float, l_action: float):
        super().__init__(
            f"non-finite loss at step {step}: dt={dt:.6g}, "
            f"l_predict={l_predict:.6g}, l_action={l_action:.6g}"
        )
        self.step = step
        self.dt = dt
        self.l_predict = l_predict
        self.l_action = l_action


@dataclass
class TrainConfig:
    max_steps: int = 50_000
    batch_size: int = 32
    learning_rate: float = 1e-3
    lam: float = 1.0  # action-variance regularization weight
    dt_max: float = 10.0
    split_index: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.dt_max <= 0 or self.lam < 0 or self.max_steps < 1 or self.batch_size < 2:
            raise ValueError("invalid training configuration")


@dataclass
class TrainRecord:
    step: int
    dt: float
    l_predict: float
    l_action: float
    l_total: float
    wall_ms: float
    # batch bookkeeping (not written to the CSV log): start indices and the
    # quantized jump in sample counts, for leakage audits
    t0_indices: tuple[int, ...] = field(default=(), repr=False)
    dt_steps: int = 0


def sample_dt(step: int, max_steps: int, dt_max: float, rng: np.random.Generator) -> float:
    """dt ~ Uniform(0, step/max_steps) * dt_max."""
    if not 0 <= step <= max_steps:
        raise ValueError(f"step {step} outside [0, {max_steps}]")
    return float(rng.uniform(0.0, 1.0) * (step / max_steps) * dt_max)


def quantize_dt(dt: float, time_delta: float) -> tuple[int, float]:
    """Round to the nearest multiple of the sampling interval."""
    k = int(round(dt / time_delta))
    return k, k * time_delta


def _prediction_loss_var(bound, tape: Tape, Q0, P0, Q1, P1, dt: float):
    """Batch-mean of (1/(1+dt)) * squared error; also returns predicted actions
    when the model exposes them (None otherwise)."""
    q0v, p0v = tape.const(Q0), tape.const(P0)
    if hasattr(bound, "predict_full"):
        q2, p2, actions = bound.predict_full(q0v, p0v, dt)
    else:
        q2, p2 = bound.predict(q0v, p0v, dt)
        actions = None
    err_q = q2 - tape.const(Q1)
    err_p = p2 - tape.const(P1)
    sq = dc.vsum(dc.square(err_q)) + dc.vsum(dc.square(err_p))
    weight = 1.0 / ((1.0 + dt) * Q0.shape[0])
    return dc.smul(weight, sq), actions


def _action_variance_var(actions):
    """Mean over components of the population variance across the batch."""
    rows = actions.shape[0]
    centered = actions - dc.repeat_row(dc.mean_rows(actions), rows)
    return dc.vmean(dc.square(centered))


def prediction_loss(model, states0: list[PhaseState], states1: list[PhaseState], dt: float) -> float:
    """Numeric convenience wrapper over the on-tape loss."""
    Q0 = np.stack([s.q for s in states0])
    P0 = np.stack([s.p for s in states0])
    Q1 = np.stack([s.q for s in states1])
    P1 = np.stack([s.p for s in states1])
    tape = Tape()
    bound = model.bind(tape)
    loss, _ = _prediction_loss_var(bound, tape, Q0, P0, Q1, P1, dt)
    return float(loss.value)


def action_loss(model, states: list[PhaseState], traj_ids=None) -> float:
    """Variance of predicted actions across a batch from one trajectory."""
    if len(states) < 2:
        raise ValueError("action loss needs a batch of at least 2 states")
    if traj_ids is not None and len(set(traj_ids)) > 1:
        raise ValueError("action loss batch mixes states from different trajectories")
    Q = np.stack([s.q for s in states])
    P = np.stack([s.p for s in states])
    tape = Tape()
    bound = model.bind(tape)
    actions, _ = bound.encode(tape.const(Q), tape.const(P))
    return float(_action_variance_var(actions).value)


class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    def __init__(self, params: list[tuple[str, np.ndarray]]):
        self.m = {name: np.zeros_like(arr) for name, arr in params}
        self.v = {name: np.zeros_like(arr) for name, arr in params}
        self.t = 0


def adam_step(
    params: list[tuple[str, np.ndarray]],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Standard bias-corrected moment update, applied in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, arr in params:
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(arr)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def train_step(model, traj: Trajectory, cfg: TrainConfig, adam: AdamState, step: int, rng) -> TrainRecord:
    t_start = time.perf_counter()
    dt_raw = sample_dt(step, cfg.max_steps, cfg.dt_max, rng)
    k, dt = quantize_dt(dt_raw, traj.time_delta)
    k = min(k, cfg.split_index - 1)
    dt = k * traj.time_delta
    t0 = rng.integers(0, cfg.split_index - k, size=cfg.batch_size)

    tape = Tape()
    bound = model.bind(tape)
    l_pred, actions = _prediction_loss_var(
        bound, tape, traj.qs[t0], traj.ps[t0], traj.qs[t0 + k], traj.ps[t0 + k], dt
    )
    use_action = actions is not None and cfg.lam > 0
    if use_action:
        l_act = _action_variance_var(actions)
        loss = l_pred + dc.smul(cfg.lam, l_act)
        l_act_val = float(l_act.value)
    else:
        l_act_val = float(_action_variance_var(actions).value) if actions is not None else 0.0
        loss = l_pred
    l_pred_val = float(l_pred.value)
    l_total_val = float(loss.value)
    if not np.isfinite(l_total_val):
        raise TrainingDiverged(step, dt, l_pred_val, l_act_val)

    node_grads = backward(loss)
    named = {name: node_grads.get(var.nid) for name, var in bound.params.items()}
    adam_step(model.parameters(), named, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    wall_ms = (time.perf_counter() - t_start) * 1e3
    return TrainRecord(
        step=step,
        dt=dt,
        l_predict=l_pred_val,
        l_action=l_act_val,
        l_total=l_total_val,
        wall_ms=wall_ms,
        t0_indices=tuple(int(i) for i in t0),
        dt_steps=k,
    )


def train(model, traj: Trajectory, cfg: TrainConfig) -> list[TrainRecord]:
    """Train in place; returns the per-step records. Deterministic given seed."""
    if traj.num_steps < cfg.split_index + 1:
        raise ValueError(
            f"trajectory has {traj.num_steps} samples, need at least split_index+1={cfg.split_index + 1}"
        )
    rng = np.random.default_rng(cfg.seed)
    adam = AdamState(model.parameters())
    records = []
    for step in range(1, cfg.max_steps + 1):
        records.append(train_step(model, traj, cfg, adam, step, rng))
    return records


def write_train_log(records: list[TrainRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "dt", "l_predict", "l_action", "l_total", "wall_ms"])
        for r in records:
            writer.writerow(
                [
                    r.step,
                    repr(float(r.dt)),
                    repr(float(r.l_predict)),
                    repr(float(r.l_action)),
                    repr(float(r.l_total)),
                    f"{r.wall_ms:.3f}",
                ]
            )


def train_on_prefix(model, traj: Trajectory, cfg: TrainConfig, num_samples: int) -> list[TrainRecord]:
    """Train using only the first num_samples samples as the training range."""
    if num_samples > cfg.split_index:
        raise ValueError(f"num_samples {num_samples} exceeds split index {cfg.split_index}")
    return train(model, traj, replace(cfg, split_index=num_samples))
