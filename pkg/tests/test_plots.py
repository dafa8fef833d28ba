"""Structural checks on the hand-rolled SVG emitters."""
import math

import pytest

from tapgen.plots import grouped_bars_svg, scatter_svg


def read(path) -> str:
    return path.read_text()


class TestScatter:
    def test_single_point_has_one_marker_and_axes(self, tmp_path):
        path = tmp_path / "one.svg"
        scatter_svg(path, {"tap": [(1.0, 0.5)]}, title="single point")
        svg = read(path)
        # one data marker plus the legend swatch, both circles
        assert svg.count("<circle") == 2
        assert svg.count("<line") >= 2          # the two axis lines
        assert ">epsilon<" in svg and ">delta<" in svg
        assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")

    def test_identical_inputs_identical_bytes(self, tmp_path):
        series = {"tap": [(0.5, 0.25), (2.0, 0.0)], "cw": [(4.0, 0.9)]}
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        scatter_svg(a, series, title="twice")
        scatter_svg(b, series, title="twice")
        assert a.read_bytes() == b.read_bytes()

    def test_twenty_point_sweep_has_twenty_markers(self, tmp_path):
        path = tmp_path / "sweep.svg"
        pts = [(0.3 * i, 1.0 / (i + 1)) for i in range(20)]
        scatter_svg(path, {"tap": pts}, title="sweep")
        assert read(path).count("<circle") == 21   # 20 data + 1 legend

    def test_legend_lists_every_series(self, tmp_path):
        path = tmp_path / "multi.svg"
        series = {"tap": [(1.0, 0.1)], "wachter": [(2.0, 0.2)],
                  "cw": [(3.0, 0.3)]}
        scatter_svg(path, series, title="methods")
        svg = read(path)
        for name in series:
            assert f">{name}<" in svg
        # second series renders as squares, third as triangles
        assert svg.count("<rect") == 1 + 2      # background + square markers
        assert svg.count("<polygon") == 2

    def test_nonfinite_points_dropped(self, tmp_path):
        path = tmp_path / "filtered.svg"
        scatter_svg(path, {"tap": [(1.0, 0.5), (math.inf, 0.2),
                                   (2.0, math.nan)]}, title="filtered")
        assert read(path).count("<circle") == 2    # 1 kept + legend

    def test_all_nonfinite_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            scatter_svg(tmp_path / "x.svg",
                        {"tap": [(math.inf, 0.0)]}, title="empty")

    def test_title_escaped(self, tmp_path):
        path = tmp_path / "esc.svg"
        scatter_svg(path, {"a": [(0.0, 0.0)]}, title="a < b & c")
        assert "a &lt; b &amp; c" in read(path)


class TestGroupedBars:
    def test_one_bar_per_group_per_series(self, tmp_path):
        path = tmp_path / "bars.svg"
        grouped_bars_svg(path, ["1", "2", "inf"],
                         {"tap": [0.2, 0.5, 1.0], "cw": [0.0, 0.1, 0.3]},
                         title="success")
        svg = read(path)
        # background + 6 bars + 2 legend swatches
        assert svg.count("<rect") == 1 + 6 + 2
        assert ">tap<" in svg and ">cw<" in svg
        for label in ("1", "2", "inf"):
            assert f">{label}<" in svg

    def test_heights_clipped_to_unit_interval(self, tmp_path):
        path = tmp_path / "clip.svg"
        grouped_bars_svg(path, ["a"], {"s": [3.0]}, title="clip")
        svg = read(path)
        plot_h = 360 - 34 - 48
        assert f'height="{plot_h}"' in svg      # full column, not 3x

    def test_identical_inputs_identical_bytes(self, tmp_path):
        args = (["g1", "g2"], {"m": [0.4, 0.6]})
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        grouped_bars_svg(a, *args, title="same")
        grouped_bars_svg(b, *args, title="same")
        assert a.read_bytes() == b.read_bytes()

    def test_length_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            grouped_bars_svg(tmp_path / "x.svg", ["a", "b"],
                             {"s": [0.5]}, title="bad")

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            grouped_bars_svg(tmp_path / "x.svg", [], {}, title="none")
