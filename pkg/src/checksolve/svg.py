"""Minimal dependency-free SVG line plots."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 720, 360, 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def line_plot(series: Sequence[tuple[Sequence[float], Sequence[float], str]],
              title: str = "", xlabel: str = "x", ylabel: str = "",
              markers: Sequence[float] = (), logx: bool = False, logy: bool = False) -> str:
    """Polyline plot of (x, y, label) series with optional x-axis markers."""
    tx = (lambda v: np.log10(v)) if logx else (lambda v: np.asarray(v, float))
    ty = (lambda v: np.log10(v)) if logy else (lambda v: np.asarray(v, float))
    xs = [tx(s[0]) for s in series]
    ys = [ty(s[1]) for s in series]
    x0, x1 = min(float(np.min(x)) for x in xs), max(float(np.max(x)) for x in xs)
    y0, y1 = min(float(np.min(y)) for y in ys), max(float(np.max(y)) for y in ys)
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1

    def px(v):
        return PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)

    def py(v):
        return H - PAD - (v - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>']
    for t in _ticks(x0, x1):
        lab = f"1e{t:g}" if logx else f"{t:g}"
        out.append(f'<line x1="{px(t):.2f}" y1="{H - PAD}" x2="{px(t):.2f}" y2="{H - PAD + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{H - PAD + 18}" text-anchor="middle" font-size="11">{lab}</text>')
    for t in _ticks(y0, y1):
        lab = f"1e{t:g}" if logy else f"{t:g}"
        out.append(f'<line x1="{PAD - 5}" y1="{py(t):.2f}" x2="{PAD}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{PAD - 8}" y="{py(t) + 4:.2f}" text-anchor="end" font-size="11">{lab}</text>')
    if y0 < 0 < y1 and not logy:
        out.append(f'<line x1="{PAD}" y1="{py(0):.2f}" x2="{W - PAD}" y2="{py(0):.2f}" '
                   'stroke="#999" stroke-dasharray="3,3"/>')
    for i, (x, y, (_, _, label)) in enumerate(zip(xs, ys, series)):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        c = COLORS[i % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{W - PAD}" y="{PAD + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{c}">{escape(label)}</text>')
    for z in markers:
        zz = float(tx(z))
        out.append(f'<circle cx="{px(zz):.2f}" cy="{py(0) if y0 < 0 < y1 else H - PAD:.2f}" r="2.5" '
                   'fill="none" stroke="black"/>')
    out.append(f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {H / 2:.1f})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
