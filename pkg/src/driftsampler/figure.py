"""Standalone SVG figures: energy heatmap plus reference/generated markers.

The file is assembled as a plain string with fixed number formatting, so the
output is byte-identical for identical inputs.  The heatmap paints the
unnormalized log density (-E) on a square grid with a viridis-style ramp;
runs of equally colored cells are merged per row to keep files small.
"""

from __future__ import annotations

import numpy as np

from .energy import EnergyTarget
from .exceptions import InvalidInputError

__all__ = ["render_figure"]

# viridis anchor colors, evenly spaced on [0, 1]
_RAMP = [
    (68, 1, 84),
    (72, 40, 120),
    (62, 74, 137),
    (49, 104, 142),
    (38, 130, 142),
    (31, 158, 137),
    (53, 183, 121),
    (109, 205, 89),
    (180, 222, 44),
    (253, 231, 37),
]

_SIZE = 520  # plot area, px
_MARGIN_L, _MARGIN_T, _MARGIN_R, _MARGIN_B = 46, 16, 150, 40
_REF_COLOR, _GEN_COLOR = "#b0b0b0", "#e0641e"


_LEVELS = 96  # quantized color levels; coarser steps let row runs merge


def _ramp_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    t = round(t * (_LEVELS - 1)) / (_LEVELS - 1)
    pos = t * (len(_RAMP) - 1)
    i = min(int(pos), len(_RAMP) - 2)
    f = pos - i
    rgb = tuple(round((1 - f) * a + f * b) for a, b in zip(_RAMP[i], _RAMP[i + 1]))
    return "#%02x%02x%02x" % rgb


def render_figure(
    target: EnergyTarget,
    gen_points,
    ref_points=None,
    grid_n: int = 200,
    bounds: tuple = (-4.0, 4.0),
    subsample: int = 2000,
) -> str:
    """Render the figure; returns the SVG document as a string.

    ``gen_points`` may be empty, in which case only the heatmap and axes are
    drawn.  Point sets beyond ``subsample`` rows are truncated to the first
    ``subsample`` rows (deterministic).
    """
    if grid_n < 2:
        raise InvalidInputError("grid_n must be at least 2")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not hi > lo:
        raise InvalidInputError("bounds must satisfy hi > lo")
    gen = np.zeros((0, 2)) if gen_points is None else np.asarray(gen_points, dtype=float)
    ref = np.zeros((0, 2)) if ref_points is None else np.asarray(ref_points, dtype=float)
    gen, ref = gen[:subsample], ref[:subsample]

    width = _MARGIN_L + _SIZE + _MARGIN_R
    height = _MARGIN_T + _SIZE + _MARGIN_B
    scale = _SIZE / (hi - lo)

    def px(x):
        return _MARGIN_L + (x - lo) * scale

    def py(y):
        return _MARGIN_T + (hi - y) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]

    # heatmap of -E at cell centers, normalized over the grid
    centers = lo + (np.arange(grid_n) + 0.5) * (hi - lo) / grid_n
    xs, ys = np.meshgrid(centers, centers, indexing="xy")
    logdens = -target.energy(np.stack([xs.ravel(), ys.ravel()], axis=1)).reshape(grid_n, grid_n)
    vmin, vmax = float(logdens.min()), float(logdens.max())
    span = vmax - vmin if vmax > vmin else 1.0
    cell = _SIZE / grid_n
    out.append("<g>")
    for j in range(grid_n - 1, -1, -1):  # top row first (large y)
        ypix = _MARGIN_T + (grid_n - 1 - j) * cell
        colors = [_ramp_color((logdens[j, i] - vmin) / span) for i in range(grid_n)]
        i = 0
        while i < grid_n:
            run = i
            while run + 1 < grid_n and colors[run + 1] == colors[i]:
                run += 1
            out.append(
                f'<rect x="{_MARGIN_L + i * cell:.2f}" y="{ypix:.2f}" '
                f'width="{(run - i + 1) * cell + 0.1:.2f}" height="{cell + 0.1:.2f}" '
                f'fill="{colors[i]}"/>'
            )
            i = run + 1
    out.append("</g>")

    def marker_group(pts, color):
        grp = [f'<g fill="{color}" fill-opacity="0.75">']
        for x, y in pts:
            if lo <= x <= hi and lo <= y <= hi:
                grp.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="1.8"/>')
        grp.append("</g>")
        return grp

    heatmap_only = len(gen) == 0
    if not heatmap_only:
        out += marker_group(ref, _REF_COLOR)
        out += marker_group(gen, _GEN_COLOR)

    # frame and integer ticks
    out.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{_SIZE}" height="{_SIZE}" '
        'fill="none" stroke="#000000" stroke-width="1"/>'
    )
    font = 'font-family="sans-serif" font-size="12"'
    for v in range(int(np.ceil(lo)), int(np.floor(hi)) + 1):
        out.append(
            f'<line x1="{px(v):.2f}" y1="{_MARGIN_T + _SIZE}" x2="{px(v):.2f}" '
            f'y2="{_MARGIN_T + _SIZE + 5}" stroke="#000000"/>'
        )
        out.append(
            f'<text x="{px(v):.2f}" y="{_MARGIN_T + _SIZE + 18}" {font} '
            f'text-anchor="middle">{v}</text>'
        )
        out.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{py(v):.2f}" x2="{_MARGIN_L}" '
            f'y2="{py(v):.2f}" stroke="#000000"/>'
        )
        out.append(
            f'<text x="{_MARGIN_L - 8}" y="{py(v) + 4:.2f}" {font} '
            f'text-anchor="end">{v}</text>'
        )
    out.append(
        f'<text x="{_MARGIN_L + _SIZE / 2:.2f}" y="{height - 8}" {font} '
        'text-anchor="middle">x1</text>'
    )
    out.append(
        f'<text x="14" y="{_MARGIN_T + _SIZE / 2:.2f}" {font} text-anchor="middle" '
        f'transform="rotate(-90 14 {_MARGIN_T + _SIZE / 2:.2f})">x2</text>'
    )

    lx, ly = _MARGIN_L + _SIZE + 14, _MARGIN_T + 12
    if not heatmap_only:
        out.append(
            f'<circle cx="{lx}" cy="{ly}" r="4" fill="{_REF_COLOR}"/>'
            f'<text x="{lx + 10}" y="{ly + 4}" {font}>reference</text>'
        )
        out.append(
            f'<circle cx="{lx}" cy="{ly + 20}" r="4" fill="{_GEN_COLOR}"/>'
            f'<text x="{lx + 10}" y="{ly + 24}" {font}>generated</text>'
        )
    out.append(f'<text x="{lx}" y="{_MARGIN_T + 64}" {font}>{target.name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
