"""Minimal SVG heat maps for surfaces sampled on a regular grid."""

from __future__ import annotations

from html import escape

import numpy as np

# blue - white - red
_LOW = np.array([49, 54, 149])
_MID = np.array([247, 247, 247])
_HIGH = np.array([165, 0, 38])


def _color(t: float) -> str:
    if t < 0.5:
        c = _LOW + (_MID - _LOW) * (t / 0.5)
    else:
        c = _MID + (_HIGH - _MID) * ((t - 0.5) / 0.5)
    r, g, b = (int(round(v)) for v in c)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(values, title: str = "", cell: int = 8) -> str:
    """Render a 2-d array as a grid of coloured squares (row 0 at the bottom)."""
    z = np.atleast_2d(np.asarray(values, dtype=float))
    ny, nx = z.shape
    lo, hi = float(np.min(z)), float(np.max(z))
    span = hi - lo if hi > lo else 1.0
    top = 20 if title else 0
    w, h = nx * cell, ny * cell + top
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">']
    if title:
        out.append(f'<text x="2" y="14" font-family="monospace" font-size="12">{escape(title)}</text>')
    for i in range(ny):
        y = top + (ny - 1 - i) * cell
        for j in range(nx):
            t = (z[i, j] - lo) / span
            out.append(f'<rect x="{j * cell}" y="{y}" width="{cell}" height="{cell}" fill="{_color(t)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
