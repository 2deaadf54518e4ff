"""Command-line front end.

Subcommands: generate, train, evaluate, bench, freqs, plot. Each reads an
optional JSON config file plus flag overrides, writes its outputs under a run
directory, and echoes the resolved configuration into manifest.json there.
Relative --out paths are placed under $ACTIONANGLE_RUN_ROOT when that is set.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import asdict
from pathlib import Path

from .baselines import (
    EunConfig,
    NodeConfig,
    baseline_load,
    baseline_save,
    build_eun,
    build_neural_ode,
)
from .evaluation import (
    bench_inference,
    error_vs_samples,
    extract_frequencies,
    gaussian_kde,
    mse_vs_dt,
    read_table,
    write_table,
)
from .model import (
    AanConfig,
    build_action_angle_network,
    checkpoint_load,
    checkpoint_save,
    read_checkpoint,
)
from .svgplot import PlotSpec, Series, write_svg
from .systems import OscillatorConfig, generate_trajectory, read_trajectory, write_trajectory
from .training import TrainConfig, train, write_train_log

RUN_ROOT_ENV = "ACTIONANGLE_RUN_ROOT"
MODEL_KINDS = ("action-angle", "eun", "neural-ode")


def _out_dir(raw: str) -> Path:
    path = Path(raw)
    root = os.environ.get(RUN_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    return doc


def _git_revision() -> str:
    try:
        return (
            subprocess.check_output(
                ["git", "rev-parse", "HEAD"], stderr=subprocess.DEVNULL, cwd=Path(__file__).parent
            )
            .decode()
            .strip()
        )
    except (OSError, subprocess.CalledProcessError):
        return "unknown"


def _write_manifest(out: Path, command: str, config: dict, seed, started: float) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "seed": seed,
        "git_revision": _git_revision(),
        "wall_time_s": time.time() - started,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)


def _system_config(doc: dict, seed: int | None) -> OscillatorConfig:
    cfg = OscillatorConfig.from_dict({**OscillatorConfig().to_dict(), **doc.get("system", {})})
    if seed is not None:
        cfg = OscillatorConfig.from_dict({**cfg.to_dict(), "seed": seed})
    return cfg


def _train_config(doc: dict, args) -> TrainConfig:
    merged = {**doc.get("train", {})}
    for key, attr in (
        ("max_steps", "steps"),
        ("batch_size", "batch"),
        ("learning_rate", "lr"),
        ("lam", "lam"),
        ("dt_max", "dt_max"),
        ("split_index", "split"),
        ("seed", "seed"),
    ):
        val = getattr(args, attr, None)
        if val is not None:
            merged[key] = val
    return TrainConfig(**merged)


def _build_model(kind: str, n: int, doc: dict, seed: int | None):
    section = doc.get("model", {}).get(kind, {})
    if seed is not None:
        section = {**section, "seed": seed}
    if kind == "action-angle":
        cfg = AanConfig(n=n, **{k: tuple(v) if k == "head_hidden" else v for k, v in section.items()})
        return build_action_angle_network(cfg), cfg
    if kind == "eun":
        cfg = EunConfig(n=n, **{k: tuple(v) if k == "hidden" else v for k, v in section.items()})
        return build_eun(cfg), cfg
    if kind == "neural-ode":
        cfg = NodeConfig(n=n, **{k: tuple(v) if k == "hidden" else v for k, v in section.items()})
        return build_neural_ode(cfg), cfg
    raise ValueError(f"unknown model kind '{kind}'")


def _load_any_checkpoint(path: str):
    kind = read_checkpoint(path)["model_kind"]
    if kind == "action-angle":
        return checkpoint_load(path)
    return baseline_load(path)


def _save_any_checkpoint(model, path) -> None:
    if model.kind == "action-angle":
        checkpoint_save(model, path)
    else:
        baseline_save(model, path)


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise ValueError(f"bad grid '{text}': {exc}") from exc


def _describe(model) -> dict:
    parts: dict[str, int] = {}
    for name, arr in model.parameters():
        part = name.split(".", 1)[0]
        parts[part] = parts.get(part, 0) + arr.size
    return {
        "model_kind": model.kind,
        "n": model.n,
        "total_params": model.num_params(),
        "parts": parts,
    }


def cmd_generate(args) -> int:
    started = time.time()
    doc = _load_config(args.config)
    cfg = _system_config(doc, args.seed)
    traj = generate_trajectory(cfg)
    out = _out_dir(args.out)
    write_trajectory(traj, out / "trajectory.csv")
    _write_manifest(out, "generate", {"system": cfg.to_dict()}, cfg.seed, started)
    print(out / "trajectory.csv")
    return 0


def cmd_train(args) -> int:
    started = time.time()
    doc = _load_config(args.config)
    if args.describe:
        n = args.n if args.data is None else read_trajectory(args.data).n
        model, _ = _build_model(args.model, n, doc, args.seed)
        print(json.dumps(_describe(model), indent=1))
        return 0
    if args.data is None:
        raise ValueError("train requires --data (or use --describe)")
    if args.out is None:
        raise ValueError("train requires --out")
    traj = read_trajectory(args.data)
    model, model_cfg = _build_model(args.model, traj.n, doc, args.seed)
    cfg = _train_config(doc, args)
    records = train(model, traj, cfg)
    out = _out_dir(args.out)
    _save_any_checkpoint(model, out / "checkpoint.json")
    write_train_log(records, out / "train_log.csv")
    resolved = {"model": {args.model: asdict(model_cfg)}, "train": asdict(cfg)}
    _write_manifest(out, "train", resolved, cfg.seed, started)
    print(out / "checkpoint.json")
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    doc = _load_config(args.config)
    traj = read_trajectory(args.data)
    out = _out_dir(args.out)
    dt_grid = _parse_grid(args.dt_grid)
    if args.samples_grid:
        samples = [int(v) for v in _parse_grid(args.samples_grid)]
        cfg = _train_config(doc, args)

        def factory():
            model, _ = _build_model(args.model, traj.n, doc, args.seed)
            return model

        rows = error_vs_samples(factory, traj, samples, dt_grid, cfg, split=cfg.split_index)
        write_table(rows, out / "error_vs_samples.csv")
        _write_manifest(out, "evaluate", {"samples_grid": samples, "dt_grid": dt_grid}, cfg.seed, started)
        print(out / "error_vs_samples.csv")
        return 0
    if not args.checkpoints:
        raise ValueError("evaluate needs --checkpoints or --samples-grid")
    models = {}
    for path in args.checkpoints:
        model = _load_any_checkpoint(path)
        models[model.kind] = model
    rows = mse_vs_dt(models, traj, dt_grid, split=args.split if args.split else 500)
    write_table(rows, out / "error_vs_dt.csv")
    _write_manifest(out, "evaluate", {"checkpoints": list(args.checkpoints), "dt_grid": dt_grid}, None, started)
    print(out / "error_vs_dt.csv")
    return 0


def cmd_bench(args) -> int:
    started = time.time()
    out = _out_dir(args.out)
    models = {}
    for path in args.checkpoints:
        model = _load_any_checkpoint(path)
        models[model.kind] = model
    dt_grid = _parse_grid(args.dt_grid)
    rows = bench_inference(models, dt_grid, repeats=args.repeats)
    write_table(rows, out / "inference_times.csv")
    _write_manifest(out, "bench", {"dt_grid": dt_grid, "repeats": args.repeats}, None, started)
    print(out / "inference_times.csv")
    return 0


def cmd_freqs(args) -> int:
    started = time.time()
    traj = read_trajectory(args.data)
    model = _load_any_checkpoint(args.checkpoint)
    if model.kind != "action-angle":
        raise ValueError("freqs requires an action-angle checkpoint")
    out = _out_dir(args.out)
    result = extract_frequencies(model, traj, split=args.split)
    samples = result["samples"]
    rows = [
        {"t0": result["t0_min"] + i, **{f"theta_dot_{j + 1}": float(samples[i, j]) for j in range(traj.n)}}
        for i in range(samples.shape[0])
    ]
    write_table(rows, out / "theta_dot_samples.csv")
    kde_rows = []
    for j in range(traj.n):
        xs, density = gaussian_kde(samples[:, j])
        kde_rows += [
            {"component": j + 1, "x": float(x), "density": float(d)} for x, d in zip(xs, density)
        ]
    write_table(kde_rows, out / "theta_dot_kde.csv")
    summary = {
        "mean_abs_sorted": [float(v) for v in result["mean_abs_sorted"]],
        "true_sorted": [float(v) for v in result["true_sorted"]],
        "relative_errors": [float(v) for v in result["relative_errors"]],
    }
    with open(out / "frequency_summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    _write_manifest(out, "freqs", {"checkpoint": args.checkpoint}, None, started)
    print(out / "frequency_summary.json")
    return 0


def _series_from_table(rows: list[dict], x_col: str, y_col: str, series_col: str | None):
    if not rows:
        raise ValueError("table is empty")
    if series_col is None:
        xs = [float(r[x_col]) for r in rows]
        ys = [float(r[y_col]) for r in rows]
        return [Series(label=y_col, xs=tuple(xs), ys=tuple(ys))]
    labels = []
    for r in rows:
        if r[series_col] not in labels:
            labels.append(r[series_col])
    out = []
    for label in labels:
        sub = [r for r in rows if r[series_col] == label]
        sub.sort(key=lambda r: float(r[x_col]))
        out.append(
            Series(
                label=str(label),
                xs=tuple(float(r[x_col]) for r in sub),
                ys=tuple(float(r[y_col]) for r in sub),
            )
        )
    return out


PLOT_KINDS = {
    "error-vs-samples": dict(x="samples", y="mse", series="dt", log_y=True,
                             x_label="training samples", y_label="test MSE"),
    "error-vs-dt": dict(x="dt", y="mse", series="model", log_y=True,
                        x_label="jump dt", y_label="test MSE"),
    "time": dict(x="dt", y="median_ms", series="model", log_y=True,
                 x_label="jump dt", y_label="median inference time [ms]"),
    "freqs": dict(x="x", y="density", series="component", log_y=False,
                  x_label="angular velocity", y_label="density", markers=False),
}


def cmd_plot(args) -> int:
    kind = PLOT_KINDS.get(args.kind)
    if kind is None:
        raise ValueError(f"unknown plot kind '{args.kind}' (choose from {sorted(PLOT_KINDS)})")
    rows = read_table(args.table)
    series = _series_from_table(rows, kind["x"], kind["y"], kind["series"])
    vlines = tuple(_parse_grid(args.vlines)) if args.vlines else ()
    spec = PlotSpec(
        title=args.title or args.kind,
        x_label=kind["x_label"],
        y_label=kind["y_label"],
        log_y=kind.get("log_y", False) and not args.linear,
        vlines=vlines,
        markers=kind.get("markers", True),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_svg(out, series, spec)
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actionangle", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    g = subs.add_parser("generate", help="write a closed-form oscillator trajectory")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(fn=cmd_generate)

    t = subs.add_parser("train", help="train a model on a trajectory")
    t.add_argument("--model", choices=MODEL_KINDS, default="action-angle")
    t.add_argument("--data")
    t.add_argument("--out")
    t.add_argument("--config")
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--lam", type=float, default=None)
    t.add_argument("--dt-max", dest="dt_max", type=float, default=None)
    t.add_argument("--split", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--n", type=int, default=2, help="dimension when --describe runs without data")
    t.add_argument("--describe", action="store_true", help="print parameter counts and exit")
    t.set_defaults(fn=cmd_train)

    e = subs.add_parser("evaluate", help="held-out error tables")
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--config")
    e.add_argument("--checkpoints", nargs="*", default=[])
    e.add_argument("--dt-grid", dest="dt_grid", default="1,2,5,10")
    e.add_argument("--samples-grid", dest="samples_grid")
    e.add_argument("--model", choices=MODEL_KINDS, default="action-angle")
    e.add_argument("--steps", type=int, default=None)
    e.add_argument("--batch", type=int, default=None)
    e.add_argument("--lr", type=float, default=None)
    e.add_argument("--lam", type=float, default=None)
    e.add_argument("--dt-max", dest="dt_max", type=float, default=None)
    e.add_argument("--split", type=int, default=None)
    e.add_argument("--seed", type=int, default=None)
    e.set_defaults(fn=cmd_evaluate)

    b = subs.add_parser("bench", help="inference wall time and dynamics-call counts")
    b.add_argument("--checkpoints", nargs="+", required=True)
    b.add_argument("--dt-grid", dest="dt_grid", default="1,2,5,10,20,50,100")
    b.add_argument("--repeats", type=int, default=30)
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_bench)

    f = subs.add_parser("freqs", help="recovered angular frequencies")
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--split", type=int, default=500)
    f.set_defaults(fn=cmd_freqs)

    p = subs.add_parser("plot", help="render a table as a deterministic SVG")
    p.add_argument("--kind", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vlines")
    p.add_argument("--title")
    p.add_argument("--linear", action="store_true", help="force linear y axis")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
