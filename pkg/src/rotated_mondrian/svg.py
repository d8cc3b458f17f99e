"""Minimal line-chart SVG writer (axes, ticks, polylines, legend)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        return [10.0 ** k for k in range(a, b + 1) if lo <= 10.0 ** k <= hi] or [lo, hi]
    if hi == lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / 4))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def line_chart(series, path, title="", xlabel="", ylabel="", logx=False, logy=False,
               bands=None, width=640, height=420) -> None:
    """Write ``series`` (``{label: (xs, ys)}``) as an SVG line chart.

    ``bands`` optionally maps a label to ``(lower, upper)`` arrays drawn as a
    shaded region under the same colour.
    """
    margin_l, margin_r, margin_t, margin_b = 70, 150, 40, 55
    pw, ph = width - margin_l - margin_r, height - margin_t - margin_b
    xs_all, ys_all = [], []
    for xs, ys in series.values():
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y) and (not logx or x > 0) and (not logy or y > 0):
                xs_all.append(x)
                ys_all.append(y)
    for lo, hi in (bands or {}).values():
        ys_all.extend(v for v in list(lo) + list(hi) if math.isfinite(v) and (not logy or v > 0))
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)

    def px(x):
        return margin_l + (tx(x) - tx(x0)) / (tx(x1) - tx(x0)) * pw

    def py(y):
        return margin_t + ph - (ty(y) - ty(y0)) / (ty(y1) - ty(y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{margin_l + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{margin_l}" y="{margin_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1, logx):
        X = px(t)
        out.append(f'<line x1="{X:.1f}" y1="{margin_t + ph}" x2="{X:.1f}" y2="{margin_t + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.1f}" y="{margin_t + ph + 18}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1, logy):
        Y = py(t)
        out.append(f'<line x1="{margin_l - 5}" y1="{Y:.1f}" x2="{margin_l}" y2="{Y:.1f}" stroke="black"/>')
        out.append(f'<text x="{margin_l - 8}" y="{Y + 4:.1f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{margin_l + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(16 {margin_t + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        if bands and label in bands:
            lo, hi = bands[label]
            pts = [(px(x), py(v)) for x, v in zip(xs, hi) if math.isfinite(v) and (not logy or v > 0)]
            pts += [(px(x), py(v)) for x, v in reversed(list(zip(xs, lo))) if math.isfinite(v) and (not logy or v > 0)]
            if pts:
                poly = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
                out.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        pts = [(px(x), py(y)) for x, y in zip(xs, ys)
               if math.isfinite(x) and math.isfinite(y) and (not logx or x > 0) and (not logy or y > 0)]
        if pts:
            line = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
            out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = margin_t + 14 + 18 * i
        lx = margin_l + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
