import numpy as np
import pytest

from actionangle.evaluation import (
    action_variance_ratio,
    bench_inference,
    dt_to_steps,
    error_vs_samples,
    extract_frequencies,
    gaussian_kde,
    mse_vs_dt,
    read_table,
    held_out_pair_indices,
    write_table,
)
from actionangle.model import AanConfig, build_action_angle_network
from actionangle.systems import OscillatorConfig, generate_trajectory
from actionangle.training import TrainConfig

TINY = AanConfig(n=2, flow_depth=4, flow_width=8, head_hidden=(8,), seed=1)


@pytest.fixture(scope="module")
def traj():
    return generate_trajectory(OscillatorConfig(seed=0))


class TableOracle:
    """Perfect model: predicts by exact lookup of the target sample."""

    def __init__(self, traj):
        self.traj = traj
        self.n = traj.n
        self.f_calls = 0

    def bind(self, tape):
        traj = self.traj

        class Bound:
            def predict(self, qv, pv, dt):
                k = int(round(dt / traj.time_delta))
                starts = [
                    int(np.argmin(np.abs(traj.qs - qv.value[i]).sum(axis=1)))
                    for i in range(qv.value.shape[0])
                ]
                idx = np.array(starts) + k
                return tape.const(traj.qs[idx]), tape.const(traj.ps[idx])

        return Bound()


def test_dt_to_steps_validates_multiples(traj):
    assert dt_to_steps(1.0, 0.1) == 10
    assert dt_to_steps(0.0, 0.1) == 0
    with pytest.raises(ValueError):
        dt_to_steps(0.15, 0.1)


def test_held_out_pairs_stay_in_test_range(traj):
    starts, k = held_out_pair_indices(traj, 5.0, split=500)
    assert k == 50
    assert starts.min() == 500
    assert starts.max() + k <= traj.num_steps - 1


def test_held_out_pairs_empty_rejected(traj):
    with pytest.raises(ValueError):
        held_out_pair_indices(traj, 49.9 + 0.1, split=500)  # dt spans whole test tail


def test_mse_vs_dt_oracle_gives_zero_column(traj):
    oracle = TableOracle(traj)
    rows = mse_vs_dt({"oracle": oracle}, traj, [0.0, 1.0, 2.0], split=500)
    assert all(r["mse"] == 0.0 for r in rows)
    assert all(r["t0_min"] >= 500 for r in rows)


def test_mse_vs_dt_zero_dt_is_roundtrip_error(traj):
    net = build_action_angle_network(TINY)
    rows = mse_vs_dt({"action-angle": net}, traj, [0.0], split=500)
    assert rows[0]["mse"] < 1e-20  # exact-inverse roundtrip noise only


def test_mse_vs_dt_uses_only_test_indices(traj):
    net = build_action_angle_network(TINY)
    rows = mse_vs_dt({"m": net}, traj, [1.0, 10.0], split=500)
    for r in rows:
        assert r["t0_min"] >= 500
        assert r["t0_max"] + dt_to_steps(r["dt"], traj.time_delta) <= traj.num_steps - 1


def test_error_vs_samples_trains_per_grid_value(traj):
    calls = []

    def factory():
        calls.append(1)
        return build_action_angle_network(TINY)

    cfg = TrainConfig(max_steps=10, batch_size=4, seed=3)
    rows = error_vs_samples(factory, traj, [50, 100], [1.0], cfg, split=500)
    assert len(calls) == 2
    assert [r["samples"] for r in rows] == [50, 100]
    assert all(r["t0_min"] >= 500 for r in rows)


def test_error_vs_samples_full_split_matches_standalone(traj):
    cfg = TrainConfig(max_steps=25, batch_size=4, seed=5)

    def factory():
        return build_action_angle_network(TINY)

    rows = error_vs_samples(factory, traj, [500], [1.0, 2.0], cfg, split=500)

    from actionangle.training import train

    model = factory()
    train(model, traj, cfg)
    standalone = mse_vs_dt({"m": model}, traj, [1.0, 2.0], split=500)
    assert rows[0]["mse"] == standalone[0]["mse"]
    assert rows[1]["mse"] == standalone[1]["mse"]


def test_error_vs_samples_rejects_grid_above_split(traj):
    cfg = TrainConfig(max_steps=5, batch_size=4)
    with pytest.raises(ValueError):
        error_vs_samples(lambda: build_action_angle_network(TINY), traj, [600], [1.0], cfg)


def test_bench_inference_counts_and_medians(traj):
    net = build_action_angle_network(TINY)
    rows = bench_inference({"aan": net}, [1.0, 100.0], repeats=30, warmup=2)
    assert all(r["f_calls"] == 1 for r in rows)
    assert all(r["median_ms"] > 0 for r in rows)


def test_bench_inference_requires_30_repeats(traj):
    net = build_action_angle_network(TINY)
    with pytest.raises(ValueError):
        bench_inference({"aan": net}, [1.0], repeats=10)


def test_extract_frequencies_zero_head(traj):
    net = build_action_angle_network(TINY)  # zero-initialized head
    result = extract_frequencies(net, traj, split=500)
    assert np.all(result["samples"] == 0.0)
    assert result["t0_min"] == 500
    assert result["samples"].shape == (500, 2)


def test_extract_frequencies_matches_true_modes_for_seeded_head(traj):
    # force theta_dot to the true frequencies via the head's final bias
    net = build_action_angle_network(TINY)
    net.head.biases[-1][...] = traj.omegas
    result = extract_frequencies(net, traj, split=500)
    np.testing.assert_allclose(result["mean_abs_sorted"], np.sort(traj.omegas), atol=1e-12)
    np.testing.assert_allclose(result["relative_errors"], 0.0, atol=1e-12)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(0)
    for sample in (rng.normal(size=400), rng.normal(size=300) * 1e-3 + 1.4, np.full(200, 2.0)):
        xs, density = gaussian_kde(sample)
        mass = np.trapezoid(density, xs)
        assert abs(mass - 1.0) < 1e-3


def test_kde_rejects_empty():
    with pytest.raises(ValueError):
        gaussian_kde(np.array([]))


def test_action_variance_ratio_decreases_for_conserving_model(traj):
    net = build_action_angle_network(TINY)
    ratio = action_variance_ratio(net, traj, start=500)
    assert ratio >= 0.0


def test_write_read_table_roundtrip(tmp_path):
    rows = [{"a": 1, "b": 2.5}, {"a": 2, "b": -0.125}]
    path = tmp_path / "t.csv"
    write_table(rows, path)
    back = read_table(path)
    assert back[0]["a"] == "1"
    assert float(back[1]["b"]) == -0.125


def test_write_table_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        write_table([], tmp_path / "x.csv")
