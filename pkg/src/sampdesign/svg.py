"""Static SVG figures of samples drawn on a point population."""

from __future__ import annotations

import colorsys
from typing import Optional

import numpy as np

SIZE = 480
MARGIN = 16


def _layout(coords: np.ndarray):
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = float(max((hi - lo).max(), 1e-12))
    scale = (SIZE - 2 * MARGIN) / span

    def to_px(p):
        # y axis points up
        return MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale

    return to_px, scale


def _spacing(coords: np.ndarray) -> float:
    xs = np.unique(coords[:, 0])
    if xs.size > 1:
        return float(np.min(np.diff(xs)))
    return 1.0


def _header(title: str):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE + 24}" '
        f'viewBox="0 0 {SIZE} {SIZE + 24}">',
        f'<rect width="{SIZE}" height="{SIZE + 24}" fill="white"/>',
        f'<text x="{SIZE / 2:.1f}" y="{SIZE + 16}" font-family="sans-serif" font-size="13" '
        f'text-anchor="middle">{title}</text>',
    ]


def scatter_svg(coords, indicator, title: str = "") -> str:
    """Population dots with the sampled units drawn as filled circles."""
    coords = np.asarray(coords, dtype=np.float64)
    ind = np.asarray(indicator).astype(bool)
    to_px, scale = _layout(coords)
    r_dot = max(0.8, 0.12 * scale * _spacing(coords))
    out = _header(title)
    for k in range(coords.shape[0]):
        x, y = to_px(coords[k])
        if ind[k]:
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{2.6 * r_dot:.2f}" fill="black"/>')
        else:
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r_dot:.2f}" fill="#9a9a9a"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _palette(n: int):
    cols = []
    for i in range(n):
        # golden-ratio hue steps keep neighbouring cell ids apart
        h = (i * 0.618033988749895) % 1.0
        r, g, b = colorsys.hls_to_rgb(h, 0.78, 0.55)
        cols.append(f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}")
    return cols


def voronoi_svg(coords, indicator, cell, v: Optional[np.ndarray] = None, title: str = "") -> str:
    """Population units coloured by the Voronoi cell of their nearest
    sampled unit; sampled units are marked, optionally labelled with the
    cell's inclusion mass."""
    coords = np.asarray(coords, dtype=np.float64)
    ind = np.asarray(indicator).astype(bool)
    cell = np.asarray(cell, dtype=np.int64)
    to_px, scale = _layout(coords)
    side = scale * _spacing(coords)
    pal = _palette(int(cell.max()) + 1 if cell.size else 1)
    out = _header(title)
    for k in range(coords.shape[0]):
        x, y = to_px(coords[k])
        out.append(f'<rect x="{x - side / 2:.2f}" y="{y - side / 2:.2f}" width="{side:.2f}" '
                   f'height="{side:.2f}" fill="{pal[cell[k]]}"/>')
    centers = np.flatnonzero(ind)
    for i, k in enumerate(centers):
        x, y = to_px(coords[k])
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{max(1.5, 0.3 * side):.2f}" fill="black"/>')
        if v is not None:
            out.append(f'<text x="{x + 0.4 * side:.2f}" y="{y - 0.4 * side:.2f}" font-family="sans-serif" '
                       f'font-size="{max(6.0, 0.7 * side):.1f}">{v[i]:.2f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
