"""Dependency-free SVG line plots.

Output is a pure function of the input data (fixed canvas, fixed number
formatting, no timestamps), so plots can be compared byte for byte.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50
COLORS = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")


def _bounds(values):
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if lo == hi:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _num(v):
    return f"{v:.2f}"


def line_plot(series, title="", xlabel="", ylabel="", step=False):
    """Render ``series`` -- a list of ``(label, xs, ys)`` -- as one polyline each.

    With ``step=True`` the lines are drawn as step functions (value held
    until the next x).
    """
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    x0, x1 = _bounds(all_x)
    y0, y1 = _bounds(all_y)
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black" stroke-width="1"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">'
        f'{escape(xlabel)}</text>',
        f'<text x="16" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {HEIGHT / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        out.append(f'<text x="{px(xv):.1f}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
                   f'font-size="10">{xv:.4g}</text>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" '
                   f'font-size="10">{yv:.4g}</text>')

    for k, (label, xs, ys) in enumerate(series):
        pts = []
        prev_y = None
        for x, y in zip(xs, ys):
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            if step and prev_y is not None:
                pts.append(f"{_num(px(x))},{_num(py(prev_y))}")
            pts.append(f"{_num(px(x))},{_num(py(y))}")
            prev_y = y
        color = COLORS[k % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" '
                   f'data-label="{escape(label)}" points="{" ".join(pts)}"/>')
        if len(series) > 1:
            ly = MARGIN_T + 14 + 14 * k
            out.append(f'<text x="{WIDTH - MARGIN_R - 6}" y="{ly}" text-anchor="end" '
                       f'font-size="11" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def error_plot(t, e):
    return line_plot([("e", t, e)], "Tracking error", "t [s]", "e")


def phase_plot(x, v):
    return line_plot([("phase", x, v)], "Phase portrait", "x", "v")


def sigma_plot(t, s1, s2):
    return line_plot([("s1", t, s1), ("s2", t, s2)], "Sigmas", "t [s]", "value", step=True)


def rmse_plot(epochs, train, test):
    series = [("train", epochs, train)]
    if any(math.isfinite(v) for v in test):
        series.append(("test", epochs, test))
    return line_plot(series, "RMSE per epoch", "epoch", "RMSE")
