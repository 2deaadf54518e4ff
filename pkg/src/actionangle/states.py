"""Phase-space and action-angle state containers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import astensor

TWO_PI = 2.0 * np.pi


def wrap_angle(theta: np.ndarray) -> np.ndarray:
    """Wrap angles into [0, 2*pi)."""
    out = np.mod(theta, TWO_PI)
    # mod can return 2*pi itself for tiny negative inputs
    out[out >= TWO_PI] = 0.0
    return out


@dataclass(frozen=True)
class PhaseState:
    """Canonical coordinates (q, p) of an n-body system at one instant."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", astensor(self.q))
        object.__setattr__(self, "p", astensor(self.p))
        if self.q.ndim != 1 or self.p.ndim != 1 or self.q.shape != self.p.shape:
            raise ValueError(f"q and p must be equal-length vectors, got {self.q.shape} and {self.p.shape}")

    @property
    def n(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class CartesianActionState:
    """Action components (Ix, Iy) in the Cartesian basis, paired index-wise."""

    Ix: np.ndarray
    Iy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Ix", astensor(self.Ix))
        object.__setattr__(self, "Iy", astensor(self.Iy))
        if self.Ix.shape != self.Iy.shape or self.Ix.ndim != 1:
            raise ValueError("Ix and Iy must be equal-length vectors")


@dataclass(frozen=True)
class ActionAngleState:
    """Torus coordinates: nonnegative actions I and angles theta in [0, 2*pi)."""

    I: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "I", astensor(self.I))
        object.__setattr__(self, "theta", astensor(self.theta))
        if self.I.shape != self.theta.shape or self.I.ndim != 1:
            raise ValueError("I and theta must be equal-length vectors")
        if np.any(self.I < 0):
            raise ValueError("actions must be nonnegative")
        if np.any(self.theta < 0) or np.any(self.theta >= TWO_PI):
            raise ValueError("angles must lie in [0, 2*pi)")

    @property
    def n(self) -> int:
        return self.I.shape[0]
