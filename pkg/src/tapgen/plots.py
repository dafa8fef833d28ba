"""Deterministic SVG emission: frontier scatters and success bar charts.

Plots are written by hand so identical inputs yield byte-identical files:
fixed canvas, fixed decimal formatting, no timestamps, series iterated in
the order given.
"""
from __future__ import annotations

import math
from pathlib import Path

__all__ = ["scatter_svg", "grouped_bars_svg"]

WIDTH, HEIGHT = 480, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 62, 16, 34, 48
PLOT_W = WIDTH - MARGIN_L - MARGIN_R
PLOT_H = HEIGHT - MARGIN_T - MARGIN_B

PALETTE = ("#1f6fb2", "#d1662c", "#3f8f4f", "#8d5bb8", "#b23a48")


def _f(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + step * 1e-9:
        out.append(0.0 if abs(v) < step * 1e-9 else v)
        v += step
    return out


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{_esc(title)}</text>',
    ]


def _axes(parts: list[str], xlabel: str, ylabel: str) -> None:
    x0, y0 = MARGIN_L, MARGIN_T + PLOT_H
    parts.append(f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" '
                 'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + PLOT_W}" y2="{y0}" '
                 'stroke="black" stroke-width="1"/>')
    parts.append(f'<text x="{x0 + PLOT_W / 2:.0f}" y="{HEIGHT - 10}" '
                 'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="11">{_esc(xlabel)}</text>')
    parts.append(f'<text x="14" y="{MARGIN_T + PLOT_H / 2:.0f}" '
                 'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="11" transform="rotate(-90 14 '
                 f'{MARGIN_T + PLOT_H / 2:.0f})">{_esc(ylabel)}</text>')


def _marker(parts: list[str], shape: str, cx: float, cy: float,
            color: str) -> None:
    if shape == "circle":
        parts.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="4" '
                     f'fill="{color}" fill-opacity="0.85"/>')
    elif shape == "square":
        parts.append(f'<rect x="{_f(cx - 3.5)}" y="{_f(cy - 3.5)}" '
                     f'width="7" height="7" fill="{color}" '
                     'fill-opacity="0.85"/>')
    else:
        pts = f"{_f(cx)},{_f(cy - 4.5)} {_f(cx - 4)},{_f(cy + 3.5)} " \
              f"{_f(cx + 4)},{_f(cy + 3.5)}"
        parts.append(f'<polygon points="{pts}" fill="{color}" '
                     'fill-opacity="0.85"/>')


_SHAPES = ("circle", "square", "triangle")


def scatter_svg(path, series: dict, title: str, xlabel: str = "epsilon",
                ylabel: str = "delta") -> None:
    """series maps name -> iterable of finite (x, y) pairs."""
    cleaned = {}
    for name, pts in series.items():
        cleaned[name] = [(float(a), float(b)) for a, b in pts
                         if math.isfinite(a) and math.isfinite(b)]
    everything = [p for pts in cleaned.values() for p in pts]
    if not everything:
        raise ValueError("nothing to plot")
    xs = [p[0] for p in everything]
    ys = [p[1] for p in everything]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_pad = (x_hi - x_lo) * 0.06 or 0.5
    y_pad = (y_hi - y_lo) * 0.06 or 0.5
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    def sx(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * PLOT_W

    def sy(v):
        return MARGIN_T + PLOT_H - (v - y_lo) / (y_hi - y_lo) * PLOT_H

    parts = _header(title)
    for tv in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{_f(sx(tv))}" y1="{MARGIN_T + PLOT_H}" '
                     f'x2="{_f(sx(tv))}" y2="{MARGIN_T + PLOT_H + 4}" '
                     'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{_f(sx(tv))}" y="{MARGIN_T + PLOT_H + 16}" '
                     'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{_f(tv)}</text>')
    for tv in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{MARGIN_L - 4}" y1="{_f(sy(tv))}" '
                     f'x2="{MARGIN_L}" y2="{_f(sy(tv))}" '
                     'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{MARGIN_L - 7}" y="{_f(sy(tv) + 3.5)}" '
                     'text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{_f(tv)}</text>')
    _axes(parts, xlabel, ylabel)
    for i, (name, pts) in enumerate(cleaned.items()):
        color = PALETTE[i % len(PALETTE)]
        shape = _SHAPES[i % len(_SHAPES)]
        for px, py in pts:
            _marker(parts, shape, sx(px), sy(py), color)
        ly = MARGIN_T + 8 + 15 * i
        _marker(parts, shape, MARGIN_L + PLOT_W - 86, ly, color)
        parts.append(f'<text x="{MARGIN_L + PLOT_W - 78}" y="{ly + 4}" '
                     'font-family="sans-serif" font-size="11">'
                     f'{_esc(name)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def grouped_bars_svg(path, group_labels, series: dict, title: str,
                     ylabel: str = "success rate") -> None:
    """series maps name -> one bar height in [0, 1] per group label."""
    group_labels = [str(g) for g in group_labels]
    if not group_labels or not series:
        raise ValueError("nothing to plot")
    for name, values in series.items():
        if len(values) != len(group_labels):
            raise ValueError(f"series {name!r} length mismatch")
    n_groups = len(group_labels)
    n_series = len(series)
    group_w = PLOT_W / n_groups
    bar_w = group_w * 0.8 / n_series

    def sy(v):
        return MARGIN_T + PLOT_H - v * PLOT_H

    parts = _header(title)
    for tv in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<line x1="{MARGIN_L - 4}" y1="{_f(sy(tv))}" '
                     f'x2="{MARGIN_L}" y2="{_f(sy(tv))}" '
                     'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{MARGIN_L - 7}" y="{_f(sy(tv) + 3.5)}" '
                     'text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{_f(tv)}</text>')
    for g, label in enumerate(group_labels):
        cx = MARGIN_L + group_w * (g + 0.5)
        parts.append(f'<text x="{_f(cx)}" y="{MARGIN_T + PLOT_H + 16}" '
                     'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{_esc(label)}</text>')
        for i, (name, values) in enumerate(series.items()):
            v = max(0.0, min(1.0, float(values[g])))
            bx = MARGIN_L + group_w * g + group_w * 0.1 + bar_w * i
            color = PALETTE[i % len(PALETTE)]
            parts.append(f'<rect x="{_f(bx)}" y="{_f(sy(v))}" '
                         f'width="{_f(bar_w)}" height="{_f(v * PLOT_H)}" '
                         f'fill="{color}"/>')
    _axes(parts, "epsilon budget", ylabel)
    for i, name in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        ly = MARGIN_T + 8 + 15 * i
        parts.append(f'<rect x="{MARGIN_L + PLOT_W - 90}" y="{ly - 5}" '
                     f'width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{MARGIN_L + PLOT_W - 76}" y="{ly + 4}" '
                     'font-family="sans-serif" font-size="11">'
                     f'{_esc(name)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
