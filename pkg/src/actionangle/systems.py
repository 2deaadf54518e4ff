"""Coupled harmonic oscillators: closed-form trajectories via normal modes.

n point masses are tied to a wall with spring constant k_w and pairwise to
each other with constant k_p. Positions follow
m_i q_i'' = -k_w q_i + sum_{j != i} k_p (q_j - q_i); solutions are
superpositions of normal modes q(t) = sum_r A_r c_r cos(w_r t + phi_r), with
the frequencies and mode vectors obtained from the eigenproblem
(M + w^2 I) c = 0. Unequal masses make M non-symmetric, so the solver works
on the mass-symmetrized stiffness matrix and maps back.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .diffcore import astensor
from .states import PhaseState, TWO_PI


class EigenConvergenceError(RuntimeError):
    """Jacobi sweeps exhausted before the off-diagonal norm fell below tolerance."""


@dataclass
class OscillatorConfig:
    n: int = 2
    masses: tuple[float, ...] | None = None  # defaults to all ones
    k_w: float = 1.0
    k_p: float = 0.5
    time_delta: float = 0.1
    num_steps: int = 1000
    amp_range: tuple[float, float] = (0.5, 1.5)
    phase_range: tuple[float, float] = (0.0, TWO_PI)
    seed: int = 0

    def __post_init__(self):
        if self.masses is None:
            self.masses = tuple(1.0 for _ in range(self.n))
        else:
            self.masses = tuple(float(m) for m in self.masses)
        if self.n < 1 or len(self.masses) != self.n:
            raise ValueError("need one positive mass per oscillator")
        if min(self.masses) <= 0 or self.k_w <= 0 or self.k_p < 0:
            raise ValueError("masses and k_w must be positive, k_p nonnegative")
        if self.time_delta <= 0 or self.num_steps < 2:
            raise ValueError("time_delta must be positive and num_steps >= 2")

    @property
    def mass_array(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "masses": list(self.masses),
            "k_w": self.k_w,
            "k_p": self.k_p,
            "time_delta": self.time_delta,
            "num_steps": self.num_steps,
            "amp_range": list(self.amp_range),
            "phase_range": list(self.phase_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OscillatorConfig":
        return cls(
            n=int(d["n"]),
            masses=tuple(d["masses"]) if d.get("masses") is not None else None,
            k_w=float(d["k_w"]),
            k_p=float(d["k_p"]),
            time_delta=float(d["time_delta"]),
            num_steps=int(d["num_steps"]),
            amp_range=tuple(d.get("amp_range", (0.5, 1.5))),
            phase_range=tuple(d.get("phase_range", (0.0, TWO_PI))),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class NormalModes:
    """Frequencies sorted ascending; column r of vectors is mode shape c_r,
    orthonormal in the mass-weighted inner product."""

    omegas: np.ndarray  # [n]
    vectors: np.ndarray  # [n, n]


def build_coupling_matrix(cfg: OscillatorConfig) -> np.ndarray:
    """M with M_ii = -(k_w + (n-1) k_p)/m_i and M_ij = k_p/m_i."""
    n = cfg.n
    m = cfg.mass_array
    mat = np.full((n, n), cfg.k_p) / m[:, None]
    np.fill_diagonal(mat, -(cfg.k_w + (n - 1) * cfg.k_p) / m)
    return mat


def jacobi_eigh(sym: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues, eigenvector columns), unsorted. Raises
    EigenConvergenceError if the off-diagonal Frobenius norm is still above
    tol after max_sweeps sweeps.
    """
    a = astensor(sym).copy()
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("jacobi_eigh expects a symmetric square matrix")
    vecs = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), vecs

    def off_norm() -> float:
        off = a - np.diag(np.diag(a))
        return float(np.sqrt((off * off).sum()))

    for _ in range(max_sweeps):
        if off_norm() < tol:
            return np.diag(a).copy(), vecs
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < tol / (n * n):
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * vecs[:, p] - s * vecs[:, q]
                rot_q = s * vecs[:, p] + c * vecs[:, q]
                vecs[:, p], vecs[:, q] = rot_p, rot_q
    if off_norm() < tol:
        return np.diag(a).copy(), vecs
    raise EigenConvergenceError(f"off-diagonal norm {off_norm():.3e} above {tol} after {max_sweeps} sweeps")


def solve_modes(cfg: OscillatorConfig) -> NormalModes:
    n = cfg.n
    m = cfg.mass_array
    stiffness = np.full((n, n), -cfg.k_p)
    np.fill_diagonal(stiffness, cfg.k_w + (n - 1) * cfg.k_p)
    inv_sqrt_m = 1.0 / np.sqrt(m)
    sym = inv_sqrt_m[:, None] * stiffness * inv_sqrt_m[None, :]
    evals, evecs = jacobi_eigh(sym)

    order = np.argsort(evals, kind="stable")
    omegas = np.sqrt(evals[order])
    vectors = inv_sqrt_m[:, None] * evecs[:, order]
    # deterministic sign: largest-magnitude entry of each mode is positive
    for r in range(n):
        lead = int(np.argmax(np.abs(vectors[:, r])))
        if vectors[lead, r] < 0:
            vectors[:, r] = -vectors[:, r]

    coupling = build_coupling_matrix(cfg)
    for r in range(n):
        residual = np.abs((coupling + omegas[r] ** 2 * np.eye(n)) @ vectors[:, r]).max()
        if residual > 1e-10:
            raise ArithmeticError(f"mode {r} residual {residual:.3e} exceeds 1e-10")
    return NormalModes(omegas=omegas, vectors=vectors)


def closed_form_state(
    modes: NormalModes,
    amplitudes: np.ndarray,
    phases: np.ndarray,
    masses: np.ndarray,
    t: float,
) -> PhaseState:
    arg = modes.omegas * float(t) + phases
    q = modes.vectors @ (amplitudes * np.cos(arg))
    p = masses * (modes.vectors @ (-amplitudes * modes.omegas * np.sin(arg)))
    return PhaseState(q, p)


@dataclass
class Trajectory:
    """Uniformly sampled states with the generating configuration attached."""

    times: np.ndarray  # [T]
    qs: np.ndarray  # [T, n]
    ps: np.ndarray  # [T, n]
    config: OscillatorConfig
    amplitudes: np.ndarray  # [n]
    phases: np.ndarray  # [n]
    omegas: np.ndarray  # [n]

    @property
    def num_steps(self) -> int:
        return self.times.shape[0]

    @property
    def n(self) -> int:
        return self.qs.shape[1]

    @property
    def time_delta(self) -> float:
        return self.config.time_delta

    def state(self, k: int) -> PhaseState:
        return PhaseState(self.qs[k], self.ps[k])

    @property
    def states(self) -> list[PhaseState]:
        return [self.state(k) for k in range(self.num_steps)]


def generate_trajectory(cfg: OscillatorConfig) -> Trajectory:
    modes = solve_modes(cfg)
    rng = np.random.default_rng(cfg.seed)
    amplitudes = rng.uniform(cfg.amp_range[0], cfg.amp_range[1], size=cfg.n)
    phases = rng.uniform(cfg.phase_range[0], cfg.phase_range[1], size=cfg.n)
    times = np.arange(cfg.num_steps, dtype=np.float64) * cfg.time_delta

    masses = cfg.mass_array
    args = np.outer(times, modes.omegas) + phases  # [T, n_modes]
    qs = np.cos(args) * amplitudes @ modes.vectors.T
    ps = (-np.sin(args) * (amplitudes * modes.omegas)) @ modes.vectors.T * masses
    return Trajectory(
        times=times,
        qs=qs,
        ps=ps,
        config=cfg,
        amplitudes=amplitudes,
        phases=phases,
        omegas=modes.omegas.copy(),
    )


def total_energy(cfg: OscillatorConfig, state: PhaseState) -> float:
    m = cfg.mass_array
    kinetic = float((state.p**2 / (2.0 * m)).sum())
    potential = float(cfg.k_w * (state.q**2).sum() / 2.0)
    for i in range(cfg.n):
        for j in range(i + 1, cfg.n):
            potential += cfg.k_p * (state.q[i] - state.q[j]) ** 2 / 2.0
    return kinetic + potential


def sidecar_path(csv_path) -> str:
    path = str(csv_path)
    return path[: -len(".csv")] + ".json" if path.endswith(".csv") else path + ".json"


def write_trajectory(traj: Trajectory, csv_path) -> None:
    """CSV with header t,q_1..q_n,p_1..p_n plus a JSON sidecar with provenance."""
    n = traj.n
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"q_{i + 1}" for i in range(n)] + [f"p_{i + 1}" for i in range(n)])
        for k in range(traj.num_steps):
            row = [repr(float(traj.times[k]))]
            row += [repr(float(v)) for v in traj.qs[k]]
            row += [repr(float(v)) for v in traj.ps[k]]
            writer.writerow(row)
    sidecar = {
        "config": traj.config.to_dict(),
        "amplitudes": [repr(float(v)) for v in traj.amplitudes],
        "phases": [repr(float(v)) for v in traj.phases],
        "omegas": [repr(float(v)) for v in traj.omegas],
    }
    with open(sidecar_path(csv_path), "w") as fh:
        json.dump(sidecar, fh, indent=1)


def read_trajectory(csv_path) -> Trajectory:
    side = sidecar_path(csv_path)
    try:
        with open(side) as fh:
            sidecar = json.load(fh)
    except OSError as exc:
        raise FileNotFoundError(f"trajectory sidecar {side} is required: {exc}") from exc
    cfg = OscillatorConfig.from_dict(sidecar["config"])
    times, qs, ps = [], [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = (len(header) - 1) // 2
        if header[0] != "t" or len(header) != 1 + 2 * n:
            raise ValueError(f"unexpected trajectory header in {csv_path}")
        for row in reader:
            times.append(float(row[0]))
            qs.append([float(v) for v in row[1 : 1 + n]])
            ps.append([float(v) for v in row[1 + n :]])
    return Trajectory(
        times=np.array(times),
        qs=np.array(qs),
        ps=np.array(ps),
        config=cfg,
        amplitudes=np.array([float(v) for v in sidecar["amplitudes"]]),
        phases=np.array([float(v) for v in sidecar["phases"]]),
        omegas=np.array([float(v) for v in sidecar["omegas"]]),
    )
