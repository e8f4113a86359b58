"""Minimal static SVG line plots (axes, polylines, legend)."""
from __future__ import annotations

import math

__all__ = ["line_plot_svg", "write_line_plot"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 420
_L, _R, _T, _B = 70, 160, 40, 55


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot_svg(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
                  hlines: dict | None = None, logy: bool = False) -> str:
    """Render ``{name: (xs, ys)}`` as an SVG document string.

    ``hlines`` maps labels to constant y values drawn dashed across the plot.
    Non-finite points are skipped.
    """
    hlines = hlines or {}
    tf = (lambda y: math.log10(y)) if logy else (lambda y: y)
    pts = {k: [(float(x), tf(float(y))) for x, y in zip(*v)
               if math.isfinite(x) and math.isfinite(y) and (not logy or y > 0)]
           for k, v in series.items()}
    xs = [x for p in pts.values() for x, _ in p] or [0.0, 1.0]
    ys = [y for p in pts.values() for _, y in p]
    ys += [tf(v) for v in hlines.values() if math.isfinite(v) and (not logy or v > 0)]
    ys = ys or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = _W - _L - _R, _H - _T - _B

    def sx(x):
        return _L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return _T + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
           f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for xv in _ticks(x0, x1):
        out.append(f'<text x="{sx(xv):.1f}" y="{_T + ph + 18}" text-anchor="middle">'
                   f'{_fmt(xv)}</text>')
    for yv in _ticks(y0, y1):
        label = _fmt(10**yv) if logy else _fmt(yv)
        out.append(f'<text x="{_L - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{_L + pw / 2:.1f}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="16" y="{_T + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_T + ph / 2:.1f})">{ylabel}</text>')
    legend = []
    for i, (name, p) in enumerate(pts.items()):
        color = _COLORS[i % len(_COLORS)]
        if p:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in p)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" '
                       f'stroke-width="1.8"/>')
            out.extend(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{color}"/>'
                       for x, y in p)
        legend.append((name, color, ""))
    for name, v in hlines.items():
        if math.isfinite(v) and (not logy or v > 0):
            yy = sy(tf(v))
            out.append(f'<line x1="{_L}" x2="{_L + pw}" y1="{yy:.2f}" y2="{yy:.2f}" '
                       f'stroke="gray" stroke-dasharray="6,4"/>')
            legend.append((name, "gray", ' stroke-dasharray="6,4"'))
    for i, (name, color, dash) in enumerate(legend):
        ly = _T + 10 + 18 * i
        lx = _L + pw + 12
        out.append(f'<line x1="{lx}" x2="{lx + 22}" y1="{ly}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_line_plot(path, series: dict, **kwargs) -> None:
    with open(path, "w") as fh:
        fh.write(line_plot_svg(series, **kwargs))
