"""Shared test oracles: finite differences and gradient checking."""

from __future__ import annotations

import numpy as np

from actionangle.diffcore import Tape, backward


def finite_diff_grad(f, arrays, h=1e-6):
    """Central-difference gradient of scalar f(*arrays) w.r.t. each array."""
    grads = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr, dtype=np.float64)
        flat = g.reshape(-1)
        base = [a.copy() for a in arrays]
        for j in range(arr.size):
            plus = [a.copy() for a in base]
            minus = [a.copy() for a in base]
            plus[k].reshape(-1)[j] += h
            minus[k].reshape(-1)[j] -= h
            flat[j] = (f(*plus) - f(*minus)) / (2.0 * h)
        grads.append(g)
    return grads


def tape_grads(build, arrays):
    """Analytic gradients of a scalar built by `build(tape, *vars)`."""
    tape = Tape()
    vs = [tape.param(a) for a in arrays]
    loss = build(tape, *vs)
    node_grads = backward(loss)
    return [node_grads.get(v.nid, np.zeros_like(a)) for v, a in zip(vs, arrays)]


def rel_err(a, b):
    """Elementwise error scaled by max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return np.abs(a - b) / scale


def check_grads(build, arrays, h=1e-6, tol=1e-5):
    """Assert analytic and finite-difference gradients agree."""
    analytic = tape_grads(build, arrays)

    def numeric_loss(*arrs):
        tape = Tape()
        vs = [tape.param(a) for a in arrs]
        return float(build(tape, *vs).value)

    numeric = finite_diff_grad(numeric_loss, arrays, h=h)
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        worst = max(worst, float(rel_err(ga, gn).max()))
    assert worst < tol, f"gradient mismatch: worst relative error {worst:.3e}"
    return worst
