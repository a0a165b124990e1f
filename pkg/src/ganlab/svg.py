"""Minimal SVG plots: scatter and polyline series on a shared pair of axes."""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    kind: str = "scatter"      # "scatter" or "line"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    return np.arange(np.ceil(lo / step) * step, hi + 1e-9 * step, step)


def _num(v: float) -> str:
    return f"{v:.6g}"


def plot(series: list[Series], title: str = "", xlabel: str = "", ylabel: str = "",
         width: int = 480, height: int = 360) -> str:
    """Render series to an SVG document string."""
    pts = [s for s in series if len(s.x)]
    xs = np.concatenate([np.asarray(s.x, float) for s in pts]) if pts else np.array([0.0, 1.0])
    ys = np.concatenate([np.asarray(s.y, float) for s in pts]) if pts else np.array([0.0, 1.0])
    finite = np.isfinite(xs) & np.isfinite(ys)
    xs, ys = (xs[finite], ys[finite]) if finite.any() else (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (np.asarray(v, float) - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (np.asarray(v, float) - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_num(px(t))}" y1="{mt + ph}" x2="{_num(px(t))}" y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_num(px(t))}" y="{mt + ph + 16}" text-anchor="middle">{_num(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 4}" y1="{_num(py(t))}" x2="{ml}" y2="{_num(py(t))}" stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{_num(py(t) + 4)}" text-anchor="end">{_num(t)}</text>')
    if title:
        out.append(f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {mt + ph / 2})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        sx, sy = px(s.x), py(s.y)
        ok = np.isfinite(sx) & np.isfinite(sy)
        sx, sy = sx[ok], sy[ok]
        if s.kind == "line" and len(sx):
            path = " ".join(f"{_num(a)},{_num(b)}" for a, b in zip(sx, sy))
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        elif s.kind == "scatter":
            out += [f'<circle cx="{_num(a)}" cy="{_num(b)}" r="1.5" fill="{color}" fill-opacity="0.6"/>'
                    for a, b in zip(sx, sy)]
        else:
            raise ValueError(f"unknown series kind {s.kind!r}")
        if s.label:
            ly = mt + 14 + 14 * i
            out.append(f'<rect x="{ml + pw - 110}" y="{ly - 8}" width="8" height="8" fill="{color}"/>')
            out.append(f'<text x="{ml + pw - 98}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
