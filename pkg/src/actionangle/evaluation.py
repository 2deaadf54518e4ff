"""Evaluation harness: held-out error tables, inference timing, recovered
angular frequencies, and kernel density estimates.

Every metric uses only the held-out tail of the trajectory (samples at or
after the split index); tables carry the index ranges they touched so the
discipline is auditable. Wall-clock columns are the one nondeterministic
output; everything else is a pure function of the checkpoint and data.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .diffcore import Tape
from .model import predict_batch
from .systems import Trajectory
from .training import TrainConfig, train


@dataclass
class EvalReport:
    """Carrier for whatever a harness run produced, plus provenance."""

    config: dict = field(default_factory=dict)
    error_vs_dt: list[dict] = field(default_factory=list)
    error_vs_samples: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    frequency_summary: dict = field(default_factory=dict)
    param_counts: dict[str, int] = field(default_factory=dict)


def dt_to_steps(dt: float, time_delta: float) -> int:
    k = int(round(dt / time_delta))
    if abs(dt - k * time_delta) > 1e-9:
        raise ValueError(f"dt={dt} is not a multiple of the sampling interval {time_delta}")
    return k


def held_out_pair_indices(traj: Trajectory, dt: float, split: int) -> tuple[np.ndarray, int]:
    """Start indices of all (t0, t0+dt) pairs lying fully in the test range."""
    k = dt_to_steps(dt, traj.time_delta)
    last_start = traj.num_steps - k
    starts = np.arange(split, last_start)
    if starts.size == 0:
        raise ValueError(f"no test pairs available for dt={dt} (jump spans the whole test range)")
    return starts, k


def mse_vs_dt(models: dict[str, object], traj: Trajectory, dt_grid, split: int = 500) -> list[dict]:
    """Held-out MSE per (model, dt); one prediction batch per cell."""
    rows = []
    for name, model in sorted(models.items()):
        for dt in dt_grid:
            starts, k = held_out_pair_indices(traj, dt, split)
            q2, p2 = predict_batch(model, traj.qs[starts], traj.ps[starts], dt)
            err = ((q2 - traj.qs[starts + k]) ** 2).sum() + ((p2 - traj.ps[starts + k]) ** 2).sum()
            mse = float(err / (starts.size * 2 * traj.n))
            rows.append(
                {
                    "model": name,
                    "dt": float(dt),
                    "mse": mse,
                    "pairs": int(starts.size),
                    "t0_min": int(starts.min()),
                    "t0_max": int(starts.max()),
                }
            )
    return rows


def error_vs_samples(
    model_factory,
    traj: Trajectory,
    samples_grid,
    dt_grid,
    cfg: TrainConfig,
    split: int = 500,
) -> list[dict]:
    """Train from scratch on the first s samples for each s in the grid, then
    report held-out MSE per dt. model_factory() must build a fresh model."""
    rows = []
    for s in samples_grid:
        if s > split:
            raise ValueError(f"samples value {s} exceeds the split index {split}")
        model = model_factory()
        train(model, traj, replace(cfg, split_index=int(s)))
        for row in mse_vs_dt({"model": model}, traj, dt_grid, split=split):
            rows.append(
                {
                    "samples": int(s),
                    "dt": row["dt"],
                    "mse": row["mse"],
                    "pairs": row["pairs"],
                    "t0_min": row["t0_min"],
                    "t0_max": row["t0_max"],
                }
            )
    return rows


def bench_inference(
    models: dict[str, object],
    dt_grid,
    repeats: int = 30,
    warmup: int = 5,
    n: int | None = None,
    seed: int = 0,
) -> list[dict]:
    """Median/IQR wall time of single-state prediction per (model, dt)."""
    if repeats < 30:
        raise ValueError("need at least 30 repeats for a stable median")
    rows = []
    for name, model in sorted(models.items()):
        dim = n if n is not None else model.n
        rng = np.random.default_rng(seed)
        q = rng.normal(size=(1, dim))
        p = rng.normal(size=(1, dim))
        for dt in dt_grid:
            for _ in range(warmup):
                predict_batch(model, q, p, dt)
            model.f_calls = 0
            predict_batch(model, q, p, dt)
            calls_per_predict = model.f_calls
            times = np.empty(repeats)
            for i in range(repeats):
                t0 = time.perf_counter()
                predict_batch(model, q, p, dt)
                times[i] = time.perf_counter() - t0
            q25, q50, q75 = np.percentile(times, [25, 50, 75])
            rows.append(
                {
                    "model": name,
                    "dt": float(dt),
                    "median_ms": float(q50 * 1e3),
                    "iqr_ms": float((q75 - q25) * 1e3),
                    "f_calls": int(calls_per_predict),
                }
            )
    return rows


def encode_actions(model, Q: np.ndarray, P: np.ndarray):
    """Actions and rates for a batch of states (action-angle models only)."""
    tape = Tape()
    bound = model.bind(tape)
    actions, _ = bound.encode(tape.const(Q), tape.const(P))
    rates = bound.rates(actions)
    return actions.value, rates.value


def extract_frequencies(model, traj: Trajectory, split: int = 500) -> dict:
    """Angular-velocity samples over the test range plus a matched comparison
    of sorted mean magnitudes against the true mode frequencies."""
    Q, P = traj.qs[split:], traj.ps[split:]
    _, rates = encode_actions(model, Q, P)
    mean_abs = np.sort(np.abs(rates).mean(axis=0))
    true = np.sort(traj.omegas)
    rel = np.abs(mean_abs - true) / true
    return {
        "samples": rates,
        "mean_abs_sorted": mean_abs,
        "true_sorted": true,
        "relative_errors": rel,
        "t0_min": int(split),
        "t0_max": int(traj.num_steps - 1),
    }


def action_variance_ratio(model, traj: Trajectory, start: int = 500) -> float:
    """Mean over components of Var(I)/mean(I)^2 across the trailing states."""
    actions, _ = encode_actions(model, traj.qs[start:], traj.ps[start:])
    mean = actions.mean(axis=0)
    var = actions.var(axis=0)
    return float((var / np.maximum(mean**2, 1e-300)).mean())


def silverman_bandwidth(samples: np.ndarray) -> float:
    n = samples.size
    sigma = samples.std()
    q75, q25 = np.percentile(samples, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34) if q75 > q25 else sigma
    h = 0.9 * spread * n ** (-0.2)
    if h <= 0:
        h = max(1e-6, 1e-3 * max(1.0, abs(float(samples.mean()))))
    return float(h)


def gaussian_kde(samples: np.ndarray, grid_points: int = 512):
    """Gaussian kernel density estimate on an evaluation grid wide enough
    that the density integrates to one."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise ValueError("kde needs at least one sample")
    h = silverman_bandwidth(samples)
    lo = samples.min() - 6 * h
    hi = samples.max() + 6 * h
    xs = np.linspace(lo, hi, grid_points)
    z = (xs[:, None] - samples[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (samples.size * h * np.sqrt(2 * np.pi))
    return xs, density


def write_table(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("refusing to write an empty table")
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
