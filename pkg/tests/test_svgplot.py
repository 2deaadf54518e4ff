import numpy as np
import pytest

from actionangle.svgplot import PlotSpec, Series, render_svg, write_svg


def demo_series():
    return [
        Series(label="a", xs=(1.0, 2.0, 5.0, 10.0), ys=(0.1, 0.2, 0.5, 1.2)),
        Series(label="b", xs=(1.0, 2.0, 5.0, 10.0), ys=(0.4, 0.3, 0.9, 2.0)),
    ]


def test_same_input_gives_identical_bytes():
    spec = PlotSpec(title="demo", x_label="x", y_label="y", log_y=True)
    first = render_svg(demo_series(), spec)
    second = render_svg(demo_series(), spec)
    assert first == second
    assert first.startswith("<svg ")
    assert first.rstrip().endswith("</svg>")


def test_empty_series_rejected():
    with pytest.raises(ValueError):
        render_svg([], PlotSpec())
    with pytest.raises(ValueError):
        render_svg([Series(label="a", xs=(), ys=())], PlotSpec())


def test_log_scale_with_zero_value_instructs_linear():
    series = [Series(label="a", xs=(1.0, 2.0), ys=(0.0, 1.0))]
    with pytest.raises(ValueError, match="linear"):
        render_svg(series, PlotSpec(log_y=True))
    series = [Series(label="a", xs=(0.0, 2.0), ys=(1.0, 1.0))]
    with pytest.raises(ValueError, match="linear"):
        render_svg(series, PlotSpec(log_x=True))


def test_vlines_rendered_dashed():
    svg = render_svg(demo_series(), PlotSpec(vlines=(3.0,)))
    assert "stroke-dasharray" in svg


def test_labels_escaped():
    series = [Series(label="a<b&c", xs=(0.0, 1.0), ys=(1.0, 2.0))]
    svg = render_svg(series, PlotSpec(title="t<>"))
    assert "a&lt;b&amp;c" in svg
    assert "t&lt;&gt;" in svg


def test_mismatched_lengths_rejected():
    with pytest.raises(ValueError):
        Series(label="a", xs=(1.0,), ys=(1.0, 2.0))


def test_write_svg_roundtrip(tmp_path):
    path = tmp_path / "plot.svg"
    write_svg(path, demo_series(), PlotSpec(title="file"))
    text = path.read_text()
    assert text == render_svg(demo_series(), PlotSpec(title="file"))


def test_constant_series_does_not_crash():
    series = [Series(label="flat", xs=(1.0, 2.0), ys=(3.0, 3.0))]
    svg = render_svg(series, PlotSpec())
    assert "polyline" in svg


def test_log_axis_ticks_cover_decades():
    series = [Series(label="a", xs=(1.0, 10.0, 100.0), ys=(1e-4, 1e-2, 1.0))]
    svg = render_svg(series, PlotSpec(log_x=True, log_y=True))
    assert "0.01" in svg or "1e-02" in svg or "0.0001" in svg
