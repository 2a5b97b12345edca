"""Pure-Python geometry kernels.

Reference implementation of the hot kernels also provided by the compiled
extension ``fairgen._fastkernels``.  Both backends implement the identical
algorithm; ``fairgen.kernels`` picks one at import time.

The central primitive is the signed area of the intersection of a disk with a
simple polygon, computed edge by edge: each directed edge (A, B) contributes
the signed area of disk ∩ triangle(center, A, B).  Sub-segments of the edge
inside the circle contribute a triangle term, sub-segments outside contribute
a circular-sector term.  For a counter-clockwise polygon the contributions sum
to the exact intersection area.
"""

from __future__ import annotations

import math

import numpy as np


def _edge_area(ax: float, ay: float, bx: float, by: float, r: float) -> float:
    """Signed area of disk(origin, r) ∩ triangle(origin, A, B)."""
    dx = bx - ax
    dy = by - ay
    dd = dx * dx + dy * dy
    if dd <= 0.0:
        return 0.0
    r2 = r * r
    # segment P(t) = A + t*(B-A); |P(t)|^2 = r^2 is a quadratic in t
    b = ax * dx + ay * dy
    c = ax * ax + ay * ay - r2
    disc = b * b - dd * c
    t_in = 1.0
    t_out = 0.0
    if disc > 0.0:
        sq = math.sqrt(disc)
        t_in = (-b - sq) / dd
        t_out = (-b + sq) / dd
    # walk the (at most three) sub-intervals in increasing t
    cuts = [0.0]
    if 0.0 < t_in < 1.0:
        cuts.append(t_in)
    if 0.0 < t_out < 1.0 and t_out > cuts[-1]:
        cuts.append(t_out)
    cuts.append(1.0)
    area = 0.0
    for k in range(len(cuts) - 1):
        t0 = cuts[k]
        t1 = cuts[k + 1]
        if t1 <= t0:
            continue
        tm = 0.5 * (t0 + t1)
        mx = ax + tm * dx
        my = ay + tm * dy
        px = ax + t0 * dx
        py = ay + t0 * dy
        qx = ax + t1 * dx
        qy = ay + t1 * dy
        cross = px * qy - py * qx
        # strict test: a tangent piece (midpoint exactly at distance r) lies
        # outside the open disk and must take the sector branch
        if mx * mx + my * my < r2:
            area += 0.5 * cross
        else:
            # boundary follows the circle between the two ray directions;
            # the subtended angle is < pi so atan2 gives the signed sweep
            area += 0.5 * r2 * math.atan2(cross, px * qx + py * qy)
    return area


def disk_polygon_area(cx: float, cy: float, r: float, verts) -> float:
    """Signed area of disk((cx, cy), r) ∩ polygon.

    ``verts`` is an (m, 2) vertex array; counter-clockwise order yields a
    positive area.  Works for the center inside or outside the polygon.
    """
    pts = np.asarray(verts, dtype=float)
    m = pts.shape[0]
    if m < 3:
        return 0.0
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()
    total = 0.0
    for i in range(m):
        j = i + 1 if i + 1 < m else 0
        total += _edge_area(xs[i] - cx, ys[i] - cy, xs[j] - cx, ys[j] - cy, r)
    return total


def _clip_half(xs, ys, axis: int, bound: float, keep_below: bool):
    """Clip polygon against one axis-aligned half-plane (Sutherland-Hodgman)."""
    out_x: list[float] = []
    out_y: list[float] = []
    m = len(xs)
    for i in range(m):
        j = i + 1 if i + 1 < m else 0
        ax, ay = xs[i], ys[i]
        bx, by = xs[j], ys[j]
        av = ax if axis == 0 else ay
        bv = bx if axis == 0 else by
        a_in = av <= bound if keep_below else av >= bound
        b_in = bv <= bound if keep_below else bv >= bound
        if a_in:
            out_x.append(ax)
            out_y.append(ay)
        if a_in != b_in:
            t = (bound - av) / (bv - av)
            out_x.append(ax + t * (bx - ax))
            out_y.append(ay + t * (by - ay))
    return out_x, out_y


def clip_polygon_to_box(verts, x0: float, x1: float, y0: float, y1: float):
    """Clip a convex polygon to the axis-aligned box; returns (k, 2) array."""
    pts = np.asarray(verts, dtype=float)
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()
    for axis, bound, keep_below in (
        (0, x0, False),
        (0, x1, True),
        (1, y0, False),
        (1, y1, True),
    ):
        if not xs:
            break
        xs, ys = _clip_half(xs, ys, axis, bound, keep_below)
    if len(xs) < 3:
        return np.empty((0, 2), dtype=float)
    return np.column_stack((xs, ys))


def covered_cell_areas(sites, rho: float, verts, offsets, box):
    """Per-cell covered areas for a cell decomposition.

    ``sites`` is (n, 2); cell i has vertices ``verts[offsets[i]:offsets[i+1]]``
    (counter-clockwise).  Each cell is clipped to ``box = (x0, x1, y0, y1)``
    and intersected with the radius-``rho`` disk around its site.  Returns
    ``(total, per_cell)``.
    """
    sites = np.asarray(sites, dtype=float)
    verts = np.asarray(verts, dtype=float)
    offsets = np.asarray(offsets)
    x0, x1, y0, y1 = (float(v) for v in box)
    n = sites.shape[0]
    per_cell = np.zeros(n, dtype=float)
    vx = verts[:, 0].tolist()
    vy = verts[:, 1].tolist()
    total = 0.0
    for i in range(n):
        lo = int(offsets[i])
        hi = int(offsets[i + 1])
        xs = vx[lo:hi]
        ys = vy[lo:hi]
        for axis, bound, keep_below in (
            (0, x0, False),
            (0, x1, True),
            (1, y0, False),
            (1, y1, True),
        ):
            if not xs:
                break
            xs, ys = _clip_half(xs, ys, axis, bound, keep_below)
        m = len(xs)
        if m < 3:
            continue
        cx = sites[i, 0]
        cy = sites[i, 1]
        a = 0.0
        for u in range(m):
            w = u + 1 if u + 1 < m else 0
            a += _edge_area(xs[u] - cx, ys[u] - cy, xs[w] - cx, ys[w] - cy, rho)
        per_cell[i] = a
        total += a
    return total, per_cell
