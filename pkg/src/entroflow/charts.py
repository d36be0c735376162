"""Self-contained static SVG line charts (no plotting dependency)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 960, 540
MARGIN = {"left": 90, "right": 30, "top": 40, "bottom": 60}


def _ticks(lo: float, hi: float, count: int = 6) -> np.ndarray:
    if hi == lo:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def _range(v: np.ndarray):
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi - lo <= 1e-12 * max(1.0, abs(lo)):
        pad = max(abs(lo) * 1e-3, 1e-3)  # flat series: centre the line
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_chart_svg(x, y, xlabel: str, ylabel: str, title: str = "") -> str:
    """One polyline on a fixed 960x540 canvas with labelled axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0, x1 = _range(x)
    y0, y1 = _range(y)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN["top"] + (y1 - v) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    for tx in _ticks(float(x.min()), float(x.max())):
        X = px(tx)
        parts.append(f'<line x1="{X:.2f}" y1="{MARGIN["top"] + ph}" x2="{X:.2f}" '
                     f'y2="{MARGIN["top"] + ph + 6}" stroke="black"/>')
        parts.append(f'<text x="{X:.2f}" y="{MARGIN["top"] + ph + 22}" font-size="13" '
                     f'text-anchor="middle">{tx:.4g}</text>')
    for ty in _ticks(float(y.min()), float(y.max())):
        Y = py(ty)
        parts.append(f'<line x1="{MARGIN["left"] - 6}" y1="{Y:.2f}" x2="{MARGIN["left"]}" '
                     f'y2="{Y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{MARGIN["left"] - 10}" y="{Y + 4:.2f}" font-size="13" '
                     f'text-anchor="end">{ty:.6g}</text>')
    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f5fa8" stroke-width="2"/>')
    parts.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 15}" font-size="15" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="20" y="{MARGIN["top"] + ph / 2}" font-size="15" text-anchor="middle" '
                 f'transform="rotate(-90 20 {MARGIN["top"] + ph / 2})">{escape(ylabel)}</text>')
    if title:
        parts.append(f'<text x="{WIDTH / 2}" y="25" font-size="16" text-anchor="middle">'
                     f'{escape(title)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_line_chart(path, x, y, xlabel: str, ylabel: str, title: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(line_chart_svg(x, y, xlabel, ylabel, title))
