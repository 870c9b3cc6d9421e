"""Minimal self-contained SVG line plots (no plotting dependency).

Output is deterministic: coordinates are formatted with fixed precision and
series are drawn in call order.
"""

from __future__ import annotations

import math

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 55
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        lo_e, hi_e = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        return [10.0 ** e for e in range(lo_e, hi_e + 1)]
    span = hi - lo
    if span <= 0:
        return [lo]
    step = 10.0 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * abs(span):
        out.append(t)
        t += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_plot(path, series, *, title="", xlabel="", ylabel="",
              logx=False, logy=False):
    """Write an SVG line plot.

    series: list of (xs, ys, label) with positive values on any log axis.
    """
    xs_all = [float(x) for xs, _, _ in series for x in xs]
    ys_all = [float(y) for _, ys, _ in series for y in ys]
    if not xs_all:
        raise ValueError("nothing to plot")
    if logx and min(xs_all) <= 0 or logy and min(ys_all) <= 0:
        raise ValueError("log axis requires positive data")

    def tx(v):
        return math.log10(v) if logx else v

    def ty(v):
        return math.log10(v) if logy else v

    x_lo, x_hi = min(map(tx, xs_all)), max(map(tx, xs_all))
    y_lo, y_hi = min(map(ty, ys_all)), max(map(ty, ys_all))
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad_y = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(v):
        return _ML + (tx(v) - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return _MT + ph - (ty(v) - y_lo) / (y_hi - y_lo) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>',
             f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" '
             'stroke="black"/>']
    if title:
        parts.append(f'<text x="{_W/2:.1f}" y="24" text-anchor="middle" '
                     f'font-size="16" font-family="sans-serif">{title}</text>')

    x_tick_vals = [10.0 ** e for e in range(math.ceil(x_lo), math.floor(x_hi) + 1)] \
        if logx else _ticks(x_lo, x_hi, False)
    for t in x_tick_vals:
        xpix = _ML + ((math.log10(t) if logx else t) - x_lo) / (x_hi - x_lo) * pw
        if xpix < _ML - 0.5 or xpix > _ML + pw + 0.5:
            continue
        parts.append(f'<line x1="{xpix:.1f}" y1="{_MT+ph}" x2="{xpix:.1f}" '
                     f'y2="{_MT+ph+5}" stroke="black"/>')
        parts.append(f'<text x="{xpix:.1f}" y="{_MT+ph+20}" text-anchor="middle" '
                     f'font-size="11" font-family="sans-serif">{_fmt(t)}</text>')
    y_tick_vals = [10.0 ** e for e in range(math.ceil(y_lo), math.floor(y_hi) + 1)] \
        if logy else _ticks(y_lo, y_hi, False)
    for t in y_tick_vals:
        ypix = _MT + ph - ((math.log10(t) if logy else t) - y_lo) / (y_hi - y_lo) * ph
        if ypix < _MT - 0.5 or ypix > _MT + ph + 0.5:
            continue
        parts.append(f'<line x1="{_ML-5}" y1="{ypix:.1f}" x2="{_ML}" '
                     f'y2="{ypix:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML-8}" y="{ypix+4:.1f}" text-anchor="end" '
                     f'font-size="11" font-family="sans-serif">{_fmt(t)}</text>')
    if xlabel:
        parts.append(f'<text x="{_ML+pw/2:.1f}" y="{_H-12}" text-anchor="middle" '
                     f'font-size="13" font-family="sans-serif">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="18" y="{_MT+ph/2:.1f}" text-anchor="middle" '
                     f'font-size="13" font-family="sans-serif" '
                     f'transform="rotate(-90 18 {_MT+ph/2:.1f})">{ylabel}</text>')

    for k, (xs, ys, label) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        coords = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}"
                          for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     'stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{px(float(x)):.2f}" cy="{py(float(y)):.2f}" '
                         f'r="3" fill="{color}"/>')
        if label:
            ly = _MT + 16 + 16 * k
            parts.append(f'<line x1="{_ML+pw-130}" y1="{ly-4}" x2="{_ML+pw-105}" '
                         f'y2="{ly-4}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{_ML+pw-100}" y="{ly}" font-size="12" '
                         f'font-family="sans-serif">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
