import math
import re

from sigmatune.plotting import error_plot, line_plot, phase_plot, rmse_plot, sigma_plot


def polylines(svg):
    return [m.split() for m in re.findall(r'points="([^"]*)"', svg)]


def test_one_polyline_per_series():
    svg = line_plot([("a", [0, 1, 2], [1, 0, 1]), ("b", [0, 1], [2, 3])])
    lines = polylines(svg)
    assert [len(p) for p in lines] == [3, 2]
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_plots_are_deterministic():
    t = [i * 1e-3 for i in range(100)]
    e = [math.sin(x * 20) for x in t]
    assert error_plot(t, e) == error_plot(list(t), list(e))


def test_non_finite_points_are_skipped():
    svg = phase_plot([0.0, math.inf, 1.0], [0.0, 1.0, math.nan])
    assert len(polylines(svg)[0]) == 1


def test_flat_series_gets_padded_axis():
    svg = line_plot([("c", [0, 1], [2.0, 2.0])])
    ys = {p.split(",")[1] for p in polylines(svg)[0]}
    assert len(ys) == 1


def test_step_plot_holds_values():
    svg = sigma_plot([0.0, 1.0, 2.0], [1.0, 3.0, 3.0], [0.0, 0.0, 1.0])
    s1 = polylines(svg)[0]
    # each change adds a horizontal then vertical segment
    assert len(s1) == 5
    assert s1[1].split(",")[1] == s1[0].split(",")[1]
    assert s1[1].split(",")[0] == s1[2].split(",")[0]


def test_points_stay_inside_the_plot_area():
    svg = error_plot([0, 1, 2, 3], [-5, 5, 0, 2])
    for p in polylines(svg)[0]:
        x, y = map(float, p.split(","))
        assert 70 <= x <= 620 and 40 <= y <= 350


def test_rmse_plot_drops_missing_test_curve():
    assert len(polylines(rmse_plot([0, 1], [1.0, 0.5], [math.nan, math.nan]))) == 1
    assert len(polylines(rmse_plot([0, 1], [1.0, 0.5], [1.1, 0.6]))) == 2
