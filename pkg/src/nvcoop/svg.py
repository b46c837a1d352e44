"""Minimal SVG line plots, written by hand to avoid a plotting dependency."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H = 640, 420
ML, MR, MT, MB = 70, 20, 30, 50  # margins


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    step = 10 ** np.floor(np.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    return np.arange(np.ceil(lo / step) * step, hi + 0.5 * step, step)


def line_plot(path, series, xlabel: str = "", ylabel: str = "", title: str = "", logx: bool = False,
              version: str = "") -> None:
    """``series``: iterable of (x, y, label[, dashed]).  Non-finite points are dropped."""
    prepared = []
    for s in series:
        x, y, label = np.asarray(s[0], float), np.asarray(s[1], float), s[2]
        dashed = len(s) > 3 and s[3]
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        prepared.append((np.log10(x[ok]) if logx else x[ok], y[ok], label, dashed))
    allx = np.concatenate([p[0] for p in prepared]) if prepared else np.array([0.0, 1.0])
    ally = np.concatenate([p[1] for p in prepared]) if prepared else np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(min(ally.min(), 0.0)), float(ally.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    y1 += 0.05 * (y1 - y0)

    def px(v):
        return ML + (v - x0) / (x1 - x0) * (W - ML - MR)

    def py(v):
        return H - MB - (v - y0) / (y1 - y0) * (H - MT - MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">']
    if version:
        out.append(f"<!-- nvcoop {escape(version)} -->")
    out.append(f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>')
    out.append(f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" fill="none" stroke="black"/>')
    for t in _ticks(x0, x1):
        lab = f"{10 ** t:.3g}" if logx else f"{t:.4g}"
        out.append(f'<line x1="{px(t):.2f}" y1="{H - MB}" x2="{px(t):.2f}" y2="{H - MB + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{H - MB + 18}" text-anchor="middle">{lab}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ML - 5}" y1="{py(t):.2f}" x2="{ML}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{ML - 8}" y="{py(t) + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{(ML + W - MR) / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(MT + H - MB) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(MT + H - MB) / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{W / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for k, (x, y, label, dashed) in enumerate(prepared):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = MT + 16 + 16 * k
        out.append(f'<line x1="{W - MR - 150}" y1="{ly - 4}" x2="{W - MR - 130}" y2="{ly - 4}" stroke="{color}"{dash}/>')
        out.append(f'<text x="{W - MR - 125}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
