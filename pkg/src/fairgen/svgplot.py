"""Self-contained SVG rendering for coverage maps, heatmaps, and plots.

Every function returns a complete SVG document as a string.  Output is
deterministic for fixed input (fixed-precision coordinates, no timestamps),
so emitted files are stable under golden-file comparison.  No plotting
dependency is used.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .coverage import CoverageConfig, build_voronoi
from .ensemble import UncertaintyField
from .errors import DomainError

POINT_COLOR = "#1f77b4"
GENERATED_COLOR = "#ff7f0e"
TARGET_COLOR = "#d62728"
COVERED_FILL = "#aec7e8"
LINE_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")
HEAT_LOW = (255, 255, 255)
HEAT_HIGH = (139, 0, 0)

_MARGIN = 40.0  # pixel gutter for axes and labels


def _fmt(v: float) -> str:
    """Fixed 3-decimal pixel coordinate, trailing zeros trimmed."""
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _document(width: float, height: float, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _ramp_color(t: float) -> str:
    t = min(1.0, max(0.0, t))
    rgb = tuple(
        int(round(lo + t * (hi - lo))) for lo, hi in zip(HEAT_LOW, HEAT_HIGH)
    )
    return "#%02x%02x%02x" % rgb


class _BoxMap:
    """Data box -> pixel rectangle with the y axis flipped."""

    def __init__(self, box: tuple[float, float, float, float], scale: float):
        self.x0, self.x1, self.y0, self.y1 = box
        self.scale = scale
        self.width = (self.x1 - self.x0) * scale
        self.height = (self.y1 - self.y0) * scale

    def x(self, v: float) -> float:
        return (v - self.x0) * self.scale

    def y(self, v: float) -> float:
        return (self.y1 - v) * self.scale

    def point(self, p) -> tuple[float, float]:
        return self.x(float(p[0])), self.y(float(p[1]))


def _polygon_attr(cell: np.ndarray, bm: _BoxMap) -> str:
    return " ".join(f"{_fmt(bm.x(x))},{_fmt(bm.y(y))}" for x, y in cell)


def _cross(cx: float, cy: float, arm: float, color: str) -> str:
    return (
        f'<path d="M{_fmt(cx - arm)} {_fmt(cy - arm)}L{_fmt(cx + arm)} {_fmt(cy + arm)}'
        f'M{_fmt(cx - arm)} {_fmt(cy + arm)}L{_fmt(cx + arm)} {_fmt(cy - arm)}" '
        f'stroke="{color}" stroke-width="2" fill="none"/>'
    )


def coverage_map_svg(
    points: np.ndarray,
    config: CoverageConfig | None = None,
    generated: np.ndarray | None = None,
    targets: np.ndarray | None = None,
    scale: float = 80.0,
) -> str:
    """Covered region (one radius-rho disk per point, clipped to its nearest-
    point cell) with the points scattered on top.

    ``generated`` points are drawn as squares and ``targets`` as crosses, so
    one frame can show an iteration's existing data, its new designs, and
    the property targets that produced them.
    """
    if config is None:
        config = CoverageConfig()
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise DomainError(f"need an (n, 2) point array, got shape {pts.shape}")
    bm = _BoxMap(config.box, scale)
    diagram = build_voronoi(pts, config.box)

    defs = []
    disks = []
    for i, cell in enumerate(diagram.cells):
        if len(cell) < 3:
            continue
        defs.append(
            f'<clipPath id="cell{i}"><polygon points="{_polygon_attr(cell, bm)}"/></clipPath>'
        )
        cx, cy = bm.point(diagram.sites[i])
        disks.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(config.rho * scale)}" '
            f'fill="{COVERED_FILL}" clip-path="url(#cell{i})"/>'
        )

    body = [
        f'<rect width="{_fmt(bm.width)}" height="{_fmt(bm.height)}" fill="white"/>',
        "<defs>",
        *defs,
        "</defs>",
        *disks,
    ]
    for p in pts:
        cx, cy = bm.point(p)
        body.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="2" fill="{POINT_COLOR}"/>'
        )
    if generated is not None:
        for p in np.asarray(generated, dtype=float):
            cx, cy = bm.point(p)
            body.append(
                f'<rect x="{_fmt(cx - 2.5)}" y="{_fmt(cy - 2.5)}" width="5" height="5" '
                f'fill="{GENERATED_COLOR}"/>'
            )
    if targets is not None:
        for p in np.asarray(targets, dtype=float):
            cx, cy = bm.point(p)
            body.append(_cross(cx, cy, 5.0, TARGET_COLOR))
    body.append(
        f'<rect width="{_fmt(bm.width)}" height="{_fmt(bm.height)}" '
        f'fill="none" stroke="black"/>'
    )
    return _document(bm.width, bm.height, body)


def heatmap_svg(field: UncertaintyField, scale: float = 80.0) -> str:
    """Field values as a grid of cells on a linear white-to-dark-red ramp."""
    values = np.asarray(field.values, dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise DomainError(f"need a 2-D value grid, got shape {values.shape}")
    bm = _BoxMap(field.box, scale)
    ny, nx = values.shape
    cw = bm.width / nx
    ch = bm.height / ny
    vmin = float(values.min())
    vmax = float(values.max())
    span = vmax - vmin
    body = [f'<rect width="{_fmt(bm.width)}" height="{_fmt(bm.height)}" fill="white"/>']
    for r in range(ny):
        for c in range(nx):
            t = 0.0 if span == 0.0 else (float(values[r, c]) - vmin) / span
            # row 0 holds the lowest y values; SVG y runs downward
            body.append(
                f'<rect x="{_fmt(c * cw)}" y="{_fmt((ny - 1 - r) * ch)}" '
                f'width="{_fmt(cw)}" height="{_fmt(ch)}" fill="{_ramp_color(t)}"/>'
            )
    body.append(
        f'<rect width="{_fmt(bm.width)}" height="{_fmt(bm.height)}" '
        f'fill="none" stroke="black"/>'
    )
    return _document(bm.width, bm.height, body)


def _axes(
    width: float,
    height: float,
    lo: tuple[float, float],
    hi: tuple[float, float],
    x_label: str,
    y_label: str,
) -> tuple[list[str], "_AxisMap"]:
    am = _AxisMap(width, height, lo, hi)
    body = [
        f'<rect width="{_fmt(width)}" height="{_fmt(height)}" fill="white"/>',
        f'<rect x="{_fmt(_MARGIN)}" y="{_fmt(_MARGIN / 2)}" '
        f'width="{_fmt(am.plot_w)}" height="{_fmt(am.plot_h)}" '
        f'fill="none" stroke="black"/>',
    ]
    for i in range(5):
        f = i / 4
        vx = lo[0] + f * (hi[0] - lo[0])
        vy = lo[1] + f * (hi[1] - lo[1])
        px = am.x(vx)
        py = am.y(vy)
        y_base = _MARGIN / 2 + am.plot_h
        body.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(y_base)}" x2="{_fmt(px)}" '
            f'y2="{_fmt(y_base + 4)}" stroke="black"/>'
        )
        body.append(
            f'<text x="{_fmt(px)}" y="{_fmt(y_base + 16)}" font-size="10" '
            f'text-anchor="middle">{escape(f"{vx:.3g}")}</text>'
        )
        body.append(
            f'<line x1="{_fmt(_MARGIN - 4)}" y1="{_fmt(py)}" x2="{_fmt(_MARGIN)}" '
            f'y2="{_fmt(py)}" stroke="black"/>'
        )
        body.append(
            f'<text x="{_fmt(_MARGIN - 6)}" y="{_fmt(py + 3)}" font-size="10" '
            f'text-anchor="end">{escape(f"{vy:.3g}")}</text>'
        )
    body.append(
        f'<text x="{_fmt(_MARGIN + am.plot_w / 2)}" y="{_fmt(height - 6)}" '
        f'font-size="12" text-anchor="middle">{escape(x_label)}</text>'
    )
    body.append(
        f'<text x="12" y="{_fmt(_MARGIN / 2 + am.plot_h / 2)}" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 12 '
        f'{_fmt(_MARGIN / 2 + am.plot_h / 2)})">{escape(y_label)}</text>'
    )
    return body, am


class _AxisMap:
    """Data ranges -> the inner plot rectangle of a framed figure."""

    def __init__(self, width, height, lo, hi):
        self.plot_w = width - 2 * _MARGIN
        self.plot_h = height - 1.5 * _MARGIN
        self.lo = lo
        self.hi = hi

    def x(self, v: float) -> float:
        span = self.hi[0] - self.lo[0]
        f = 0.5 if span == 0 else (v - self.lo[0]) / span
        return _MARGIN + f * self.plot_w

    def y(self, v: float) -> float:
        span = self.hi[1] - self.lo[1]
        f = 0.5 if span == 0 else (v - self.lo[1]) / span
        return _MARGIN / 2 + (1 - f) * self.plot_h


def _series_bounds(series: list[np.ndarray]) -> tuple[tuple[float, float], tuple[float, float]]:
    allpts = np.vstack(series)
    lo = (float(allpts[:, 0].min()), float(allpts[:, 1].min()))
    hi = (float(allpts[:, 0].max()), float(allpts[:, 1].max()))
    return lo, hi


def line_plot_svg(
    curves: dict[str, list[tuple[float, float]]],
    x_label: str = "",
    y_label: str = "",
    width: float = 640.0,
    height: float = 440.0,
) -> str:
    """One polyline per labelled series, with ticks and a legend."""
    if not curves or any(len(c) == 0 for c in curves.values()):
        raise DomainError("every curve needs at least one point")
    series = {k: np.asarray(v, dtype=float) for k, v in curves.items()}
    lo, hi = _series_bounds(list(series.values()))
    body, am = _axes(width, height, lo, hi, x_label, y_label)
    for idx, (label, pts) in enumerate(series.items()):
        color = LINE_COLORS[idx % len(LINE_COLORS)]
        path = " ".join(f"{_fmt(am.x(x))},{_fmt(am.y(y))}" for x, y in pts)
        body.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = _MARGIN / 2 + 14 + 14 * idx
        body.append(
            f'<line x1="{_fmt(_MARGIN + 8)}" y1="{_fmt(ly - 4)}" '
            f'x2="{_fmt(_MARGIN + 28)}" y2="{_fmt(ly - 4)}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        body.append(
            f'<text x="{_fmt(_MARGIN + 32)}" y="{_fmt(ly)}" '
            f'font-size="11">{escape(label)}</text>'
        )
    return _document(width, height, body)


def scatter_svg(
    groups: dict[str, np.ndarray],
    x_label: str = "",
    y_label: str = "",
    width: float = 640.0,
    height: float = 440.0,
) -> str:
    """One dot cloud per labelled (n, 2) group, with ticks and a legend."""
    if not groups or any(np.asarray(g).size == 0 for g in groups.values()):
        raise DomainError("every group needs at least one point")
    series = {k: np.asarray(v, dtype=float).reshape(-1, 2) for k, v in groups.items()}
    lo, hi = _series_bounds(list(series.values()))
    body, am = _axes(width, height, lo, hi, x_label, y_label)
    for idx, (label, pts) in enumerate(series.items()):
        color = LINE_COLORS[idx % len(LINE_COLORS)]
        for x, y in pts:
            body.append(
                f'<circle cx="{_fmt(am.x(x))}" cy="{_fmt(am.y(y))}" r="2.5" '
                f'fill="{color}" fill-opacity="0.7"/>'
            )
        ly = _MARGIN / 2 + 14 + 14 * idx
        body.append(
            f'<circle cx="{_fmt(_MARGIN + 14)}" cy="{_fmt(ly - 4)}" r="3" fill="{color}"/>'
        )
        body.append(
            f'<text x="{_fmt(_MARGIN + 22)}" y="{_fmt(ly)}" '
            f'font-size="11">{escape(label)}</text>'
        )
    return _document(width, height, body)
