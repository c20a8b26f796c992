"""Dependency-free SVG line plots on a fixed 800x600 canvas."""

from __future__ import annotations

import math
from html import escape

WIDTH, HEIGHT = 800, 600
MARGIN = {"left": 80, "right": 30, "top": 50, "bottom": 60}
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    step = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        if raw <= m * step:
            step *= m
            break
    first = math.ceil(lo / step) * step
    return [first + k * step for k in range(int((hi - first) / step + 1e-9) + 1)]


def line_plot(series, title: str = "", xlabel: str = "", ylabel: str = "", markers: bool = False) -> str:
    """``series`` is a list of (label, xs, ys); non-finite points are skipped."""
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    if not pts:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(p[0] for p in pts), max(p[0] for p in pts)
    y_lo, y_hi = min(p[1] for p in pts), max(p[1] for p in pts)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1, y_hi + 1
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    left, right = MARGIN["left"], WIDTH - MARGIN["right"]
    top, bottom = MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (right - left)

    def sy(y):
        return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" fill="none" stroke="black"/>']
    for tx in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{sx(tx):.2f}" y1="{bottom}" x2="{sx(tx):.2f}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(tx):.2f}" y="{bottom + 20}" font-size="12" text-anchor="middle">{tx:g}</text>')
    for ty in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{left - 5}" y1="{sy(ty):.2f}" x2="{left}" y2="{sy(ty):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{sy(ty) + 4:.2f}" font-size="12" text-anchor="end">{ty:g}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="30" font-size="16" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<text x="{(left + right) / 2}" y="{HEIGHT - 15}" font-size="14" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="20" y="{(top + bottom) / 2}" font-size="14" text-anchor="middle" '
               f'transform="rotate(-90 20 {(top + bottom) / 2})">{escape(ylabel)}</text>')
    for k, (label, xs, ys) in enumerate(series):
        colour = PALETTE[k % len(PALETTE)]
        coords = [f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if markers:
            out.extend(f'<circle cx="{c.split(",")[0]}" cy="{c.split(",")[1]}" r="2.5" fill="{colour}"/>' for c in coords)
        else:
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{" ".join(coords)}"/>')
        ly = top + 18 * (k + 1)
        out.append(f'<line x1="{right - 150}" y1="{ly - 4}" x2="{right - 130}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{right - 125}" y="{ly}" font-size="12">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
