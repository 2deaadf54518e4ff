"""Dependency-free deterministic SVG line charts.

Output is a pure function of the input series and spec: fixed viewport,
fixed palette, every coordinate printed with six significant digits, no
timestamps. Rendering the same data twice yields identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

WIDTH = 720
HEIGHT = 480
MARGIN = {"left": 72, "right": 24, "top": 48, "bottom": 56}


@dataclass(frozen=True)
class Series:
    label: str
    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))
        if len(self.xs) != len(self.ys):
            raise ValueError("series xs and ys lengths differ")


@dataclass(frozen=True)
class PlotSpec:
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    log_x: bool = False
    log_y: bool = False
    vlines: tuple[float, ...] = ()
    markers: bool = True


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _check_log(values, axis: str) -> None:
    if any(v <= 0 for v in values):
        raise ValueError(f"log scale on {axis} axis requires positive values; use linear scale")


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    ticks = []
    e = math.floor(math.log10(lo))
    while 10.0**e <= hi * (1 + 1e-12):
        if 10.0**e >= lo * (1 - 1e-12):
            ticks.append(10.0**e)
        e += 1
    if not ticks:
        ticks = [lo, hi]
    return ticks


def render_svg(series: list[Series], spec: PlotSpec) -> str:
    if not series or all(len(s.xs) == 0 for s in series):
        raise ValueError("nothing to plot: no non-empty series")
    xs_all = [v for s in series for v in s.xs] + list(spec.vlines)
    ys_all = [v for s in series for v in s.ys]
    if spec.log_x:
        _check_log(xs_all, "x")
    if spec.log_y:
        _check_log(ys_all, "y")

    def tx(v: float) -> float:
        return math.log10(v) if spec.log_x else v

    def ty(v: float) -> float:
        return math.log10(v) if spec.log_y else v

    x_lo, x_hi = min(map(tx, xs_all)), max(map(tx, xs_all))
    y_lo, y_hi = min(map(ty, ys_all)), max(map(ty, ys_all))
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad_x = 0.04 * (x_hi - x_lo)
    pad_y = 0.06 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    plot_l = MARGIN["left"]
    plot_r = WIDTH - MARGIN["right"]
    plot_t = MARGIN["top"]
    plot_b = HEIGHT - MARGIN["bottom"]

    def px(v: float) -> float:
        return plot_l + (tx(v) - x_lo) / (x_hi - x_lo) * (plot_r - plot_l)

    def py(v: float) -> float:
        return plot_b - (ty(v) - y_lo) / (y_hi - y_lo) * (plot_b - plot_t)

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica,Arial,sans-serif">'
    )
    out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>')
    if spec.title:
        out.append(
            f'<text x="{WIDTH / 2:.1f}" y="28" text-anchor="middle" font-size="16">{_escape(spec.title)}</text>'
        )

    # axes frame
    out.append(
        f'<rect x="{plot_l}" y="{plot_t}" width="{plot_r - plot_l}" height="{plot_b - plot_t}" '
        f'fill="none" stroke="#333333" stroke-width="1"/>'
    )

    if spec.log_x:
        x_ticks = _log_ticks(10.0 ** x_lo, 10.0 ** x_hi)
    else:
        x_ticks = _nice_ticks(x_lo, x_hi)
    if spec.log_y:
        y_ticks = _log_ticks(10.0 ** y_lo, 10.0 ** y_hi)
    else:
        y_ticks = _nice_ticks(y_lo, y_hi)

    for t in x_ticks:
        x = px(t)
        if not plot_l - 1e-6 <= x <= plot_r + 1e-6:
            continue
        out.append(
            f'<line x1="{_fmt(x)}" y1="{plot_b}" x2="{_fmt(x)}" y2="{plot_t}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_fmt(x)}" y="{plot_b + 18}" text-anchor="middle" font-size="11">{_fmt(t)}</text>'
        )
    for t in y_ticks:
        y = py(t)
        if not plot_t - 1e-6 <= y <= plot_b + 1e-6:
            continue
        out.append(
            f'<line x1="{plot_l}" y1="{_fmt(y)}" x2="{plot_r}" y2="{_fmt(y)}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{plot_l - 6}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11">{_fmt(t)}</text>'
        )

    if spec.x_label:
        out.append(
            f'<text x="{(plot_l + plot_r) / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle" '
            f'font-size="13">{_escape(spec.x_label)}</text>'
        )
    if spec.y_label:
        cx, cy = 18, (plot_t + plot_b) / 2
        out.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" font-size="13" '
            f'transform="rotate(-90 {cx} {cy:.1f})">{_escape(spec.y_label)}</text>'
        )

    for v in spec.vlines:
        x = px(v)
        out.append(
            f'<line x1="{_fmt(x)}" y1="{plot_t}" x2="{_fmt(x)}" y2="{plot_b}" '
            f'stroke="#555555" stroke-width="1" stroke-dasharray="5,4"/>'
        )

    for idx, s in enumerate(series):
        if not s.xs:
            continue
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(s.xs, s.ys))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
        if spec.markers and len(s.xs) <= 64:
            for x, y in zip(s.xs, s.ys):
                out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="2.6" fill="{color}"/>')

    # legend, top-right inside the frame
    for idx, s in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        ly = plot_t + 16 + 16 * idx
        out.append(
            f'<line x1="{plot_r - 130}" y1="{ly - 4}" x2="{plot_r - 108}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{plot_r - 102}" y="{ly}" font-size="11">{_escape(s.label)}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, series: list[Series], spec: PlotSpec) -> None:
    svg = render_svg(series, spec)
    with open(path, "w") as fh:
        fh.write(svg)
