"""Minimal self-contained SVG line/scatter charts (800 x 600)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 600
_MARGIN = (80, 40, 40, 70)  # left, right, top, bottom
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


@dataclass
class Series:
    label: str
    xs: list[float]
    ys: list[float]
    style: str = "line"  # "line", "points" or "both"


def _ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def line_chart(series: list[Series], *, title: str, xlabel: str, ylabel: str) -> str:
    xs = [x for s in series for x, y in zip(s.xs, s.ys) if math.isfinite(y)]
    ys = [y for s in series for y in s.ys if math.isfinite(y)]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = _MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def px(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * pw

    def py(y: float) -> float:
        return top + (y1 - y) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{top + ph}" x2="{px(t):.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{top + ph + 20}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 5}" y1="{py(t):.2f}" x2="{left}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py(t) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="12">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 20}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="14">{escape(xlabel)}</text>')
    out.append(f'<text x="20" y="{top + ph / 2}" text-anchor="middle" font-family="sans-serif" font-size="14" '
               f'transform="rotate(-90 20 {top + ph / 2})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = [(px(x), py(y)) for x, y in zip(s.xs, s.ys) if math.isfinite(y)]
        if s.style in ("line", "both") and len(pts) > 1:
            path = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        if s.style in ("points", "both"):
            out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="4" fill="{color}"/>' for a, b in pts)
        ly = top + 16 + 18 * i
        out.append(f'<rect x="{left + pw - 190}" y="{ly - 10}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{left + pw - 172}" y="{ly}" font-family="sans-serif" font-size="12">'
                   f'{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
