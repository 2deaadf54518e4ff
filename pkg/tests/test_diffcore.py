import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actionangle import diffcore as dc
from actionangle.diffcore import ShapeError, Tape, astensor, backward

from helpers import check_grads, finite_diff_grad, rel_err, tape_grads


def test_astensor_rejects_non_finite():
    with pytest.raises(ValueError):
        astensor([1.0, np.nan])
    with pytest.raises(ValueError):
        astensor([np.inf])
    assert astensor([1.0, np.inf], checked=False)[1] == np.inf


def test_add_values():
    tape = Tape()
    out = tape.const([1.0, 2.0]) + tape.const([3.0, 4.0])
    np.testing.assert_array_equal(out.value, [4.0, 6.0])


def test_matmul_shape_algebra():
    tape = Tape()
    a = tape.const(np.ones((2, 3)))
    b = tape.const(np.ones((3, 1)))
    assert dc.matmul(a, b).shape == (2, 1)


def test_matmul_incompatible_shapes_rejected():
    tape = Tape()
    a = tape.const(np.ones((2, 3)))
    b = tape.const(np.ones((2, 1)))
    with pytest.raises(ShapeError):
        dc.matmul(a, b)


@pytest.mark.parametrize(
    "op,shapes",
    [
        (dc.add, [(3,), (2,)]),
        (dc.sub, [(2, 2), (2,)]),
        (dc.mul, [(4,), (3,)]),
        (dc.atan2, [(3,), (4,)]),
        (dc.matvec, [(2, 3), (2,)]),
        (dc.matvec_t, [(2, 3), (3,)]),
        (dc.vconcat, [(2, 3), (3, 3)]),
    ],
)
def test_binary_shape_mismatch_rejected(op, shapes):
    tape = Tape()
    args = [tape.const(np.ones(s)) for s in shapes]
    with pytest.raises(ShapeError):
        op(*args)


def test_record_rejects_foreign_input_ids():
    tape = Tape()
    with pytest.raises(ValueError):
        tape.record("add", (0, 1), np.zeros(2))


def test_backward_requires_scalar_loss():
    tape = Tape()
    x = tape.param([1.0, 2.0])
    with pytest.raises(ValueError):
        backward(dc.mul(x, x))


def test_backward_sum_of_squares():
    tape = Tape()
    x = tape.param([1.0, 2.0, 3.0])
    grads = backward(dc.vsum(dc.mul(x, x)))
    np.testing.assert_allclose(grads[x.nid], [2.0, 4.0, 6.0], atol=1e-12)


def test_backward_constant_loss_gives_empty_grad():
    tape = Tape()
    tape.param([1.0])
    loss = dc.vsum(dc.square(tape.const([2.0, 3.0])))
    assert backward(loss) == {}


def test_atan2_gradient_matches_finite_differences():
    # independent oracle: central differences at (y, x) = (1, 1)
    def f(y, x):
        return float(np.arctan2(y, x))

    fd = finite_diff_grad(f, [np.asarray(1.0), np.asarray(1.0)], h=1e-6)
    tape = Tape()
    y = tape.param(np.asarray(1.0))
    x = tape.param(np.asarray(1.0))
    grads = backward(dc.atan2(y, x))
    assert rel_err(grads[y.nid], fd[0]).max() < 1e-5
    assert rel_err(grads[x.nid], fd[1]).max() < 1e-5
    np.testing.assert_allclose(grads[y.nid], 0.5, atol=1e-9)
    np.testing.assert_allclose(grads[x.nid], -0.5, atol=1e-9)


def _away_from(x, bad, margin=1e-3):
    """Nudge entries of x away from a nondifferentiable locus."""
    x = x.copy()
    x[np.abs(x - bad) < margin] += 2 * margin
    return x


OP_CASES = {
    "add": lambda t, a, b: dc.vsum(dc.mul(dc.add(a, b), dc.add(a, b))),
    "sub": lambda t, a, b: dc.vsum(dc.square(dc.sub(a, b))),
    "mul": lambda t, a, b: dc.vsum(dc.mul(dc.mul(a, b), a)),
    "smul": lambda t, a: dc.vsum(dc.square(dc.smul(1.7, a))),
    "scalar_mul": lambda t, s, x: dc.vsum(dc.square(dc.scalar_mul(s, x))),
    "matvec": lambda t, w, x: dc.vsum(dc.square(dc.matvec(w, x))),
    "matvec_t": lambda t, w, y: dc.vsum(dc.square(dc.matvec_t(w, y))),
    "matmul": lambda t, a, b: dc.vsum(dc.square(dc.matmul(a, b))),
    "transpose": lambda t, a, b: dc.vsum(dc.mul(dc.transpose(a), b)),
    "repeat_row": lambda t, v: dc.vsum(dc.square(dc.repeat_row(v, 3))),
    "mean_rows": lambda t, m: dc.vsum(dc.square(dc.mean_rows(m))),
    "tanh": lambda t, x: dc.vsum(dc.square(dc.tanh(x))),
    "sin": lambda t, x: dc.vsum(dc.mul(dc.sin(x), x)),
    "cos": lambda t, x: dc.vsum(dc.mul(dc.cos(x), x)),
    "sqrt": lambda t, x: dc.vsum(dc.sqrt(x)),
    "square": lambda t, x: dc.vsum(dc.square(x)),
    "atan2": lambda t, y, x: dc.vsum(dc.mul(dc.atan2(y, x), y)),
    "vsum": lambda t, x: dc.square(dc.vsum(x)),
    "vmean": lambda t, x: dc.square(dc.vmean(x)),
    "vconcat": lambda t, a, b: dc.vsum(dc.square(dc.vconcat(a, b))),
    "vslice": lambda t, x: dc.vsum(dc.square(dc.vslice(x, 1, 3))),
}


def _op_arrays(name, rng):
    if name in ("matvec",):
        return [rng.normal(size=(3, 4)), rng.normal(size=4)]
    if name in ("matvec_t",):
        return [rng.normal(size=(3, 4)), rng.normal(size=3)]
    if name == "matmul":
        return [rng.normal(size=(2, 3)), rng.normal(size=(3, 4))]
    if name == "transpose":
        return [rng.normal(size=(2, 3)), rng.normal(size=(3, 2))]
    if name == "repeat_row":
        return [rng.normal(size=4)]
    if name == "mean_rows":
        return [rng.normal(size=(3, 4))]
    if name == "scalar_mul":
        return [rng.normal(size=()), rng.normal(size=(2, 3))]
    if name == "sqrt":
        return [rng.uniform(0.5, 3.0, size=5)]
    if name == "atan2":
        return [_away_from(rng.normal(size=4), 0.0), _away_from(rng.normal(size=4), 0.0)]
    if name in ("vconcat",):
        return [rng.normal(size=(2, 3)), rng.normal(size=(2, 2))]
    if name == "vslice":
        return [rng.normal(size=(2, 4))]
    if name in ("add", "sub", "mul"):
        return [rng.normal(size=(2, 3)), rng.normal(size=(2, 3))]
    return [rng.normal(size=(2, 3))]


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_gradcheck_every_op_kind(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(8):
        check_grads(OP_CASES[name], _op_arrays(name, rng))


def test_backward_is_linear_in_the_loss():
    rng = np.random.default_rng(7)
    x0 = rng.normal(size=5)
    a, b = 2.5, -1.25

    def l1(t, x):
        return dc.vsum(dc.mul(x, x))

    def l2(t, x):
        return dc.vsum(dc.sin(x))

    def combo(t, x):
        return dc.add(dc.smul(a, l1(t, x)), dc.smul(b, l2(t, x)))

    (g1,) = tape_grads(l1, [x0])
    (g2,) = tape_grads(l2, [x0])
    (gc,) = tape_grads(combo, [x0])
    np.testing.assert_allclose(gc, a * g1 + b * g2, atol=1e-12)


def test_backward_replay_is_bitwise_deterministic():
    rng = np.random.default_rng(11)
    tape = Tape()
    w = tape.param(rng.normal(size=(3, 3)))
    x = tape.param(rng.normal(size=(4, 3)))
    h = dc.tanh(dc.matmul(x, dc.transpose(w)))
    loss = dc.vmean(dc.square(h))
    g1 = backward(loss)
    g2 = backward(loss)
    assert g1.keys() == g2.keys()
    for k in g1:
        assert np.array_equal(g1[k], g2[k])


def test_gradient_fanout_accumulates():
    # y = x used twice: d/dx (x*x + 3x) should be 2x + 3
    tape = Tape()
    x = tape.param([2.0])
    loss = dc.vsum(dc.add(dc.mul(x, x), dc.smul(3.0, x)))
    grads = backward(loss)
    np.testing.assert_allclose(grads[x.nid], [7.0], atol=1e-12)


def test_sqrt_adjoint_guarded_at_zero():
    tape = Tape()
    x = tape.param([0.0, 4.0])
    grads = backward(dc.vsum(dc.sqrt(x)))
    np.testing.assert_allclose(grads[x.nid], [0.0, 0.25], atol=1e-12)


def test_atan2_adjoint_guarded_at_origin():
    tape = Tape()
    y = tape.param([0.0])
    x = tape.param([0.0])
    grads = backward(dc.vsum(dc.atan2(y, x)))
    np.testing.assert_allclose(grads[y.nid], [0.0])
    np.testing.assert_allclose(grads[x.nid], [0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradcheck_composite_expressions(seed):
    rng = np.random.default_rng(seed)

    def build(t, w, x, b):
        h = dc.tanh(dc.add(dc.matmul(x, dc.transpose(w)), dc.repeat_row(b, x.shape[0])))
        return dc.vmean(dc.square(h))

    check_grads(build, [rng.normal(size=(4, 3)), rng.normal(size=(5, 3)), rng.normal(size=4)])


def test_slice_and_concat_roundtrip():
    tape = Tape()
    x = tape.const(np.arange(12.0).reshape(3, 4))
    lo = dc.vslice(x, 0, 2)
    hi = dc.vslice(x, 2, 4)
    np.testing.assert_array_equal(dc.vconcat(lo, hi).value, x.value)


def test_vslice_bounds_checked():
    tape = Tape()
    x = tape.const(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        dc.vslice(x, 2, 5)
