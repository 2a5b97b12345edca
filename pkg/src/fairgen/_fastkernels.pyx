# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled geometry kernels.

Same algorithms as ``fairgen._kernels_py``; see that module for the
derivation.  This version avoids per-cell Python overhead so the exact
coverage score stays cheap inside the Bayesian-optimization loop.
"""

from libc.math cimport sqrt, atan2

import numpy as np

DEF MAX_CLIP = 256


cdef double _edge_area(double ax, double ay, double bx, double by,
                       double r) nogil:
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double dd = dx * dx + dy * dy
    cdef double r2 = r * r
    cdef double b, c, disc, sq, t_in, t_out
    cdef double cuts[4]
    cdef int ncuts, k
    cdef double t0, t1, tm, mx, my, px, py, qx, qy, cross
    cdef double area = 0.0

    if dd <= 0.0:
        return 0.0
    b = ax * dx + ay * dy
    c = ax * ax + ay * ay - r2
    disc = b * b - dd * c
    cuts[0] = 0.0
    ncuts = 1
    if disc > 0.0:
        sq = sqrt(disc)
        t_in = (-b - sq) / dd
        t_out = (-b + sq) / dd
        if 0.0 < t_in < 1.0:
            cuts[ncuts] = t_in
            ncuts += 1
        if 0.0 < t_out < 1.0 and t_out > cuts[ncuts - 1]:
            cuts[ncuts] = t_out
            ncuts += 1
    cuts[ncuts] = 1.0
    ncuts += 1

    for k in range(ncuts - 1):
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
        # strict: tangent pieces (midpoint exactly at r) take the sector branch
        if mx * mx + my * my < r2:
            area += 0.5 * cross
        else:
            area += 0.5 * r2 * atan2(cross, px * qx + py * qy)
    return area


cdef int _clip_half(double* xs, double* ys, int m, double* ox, double* oy,
                    int axis, double bound, bint keep_below) nogil:
    cdef int i, j, out = 0
    cdef double ax, ay, bx, by, av, bv, t
    cdef bint a_in, b_in
    for i in range(m):
        j = i + 1 if i + 1 < m else 0
        ax = xs[i]
        ay = ys[i]
        bx = xs[j]
        by = ys[j]
        av = ax if axis == 0 else ay
        bv = bx if axis == 0 else by
        a_in = (av <= bound) if keep_below else (av >= bound)
        b_in = (bv <= bound) if keep_below else (bv >= bound)
        if a_in:
            ox[out] = ax
            oy[out] = ay
            out += 1
        if a_in != b_in:
            t = (bound - av) / (bv - av)
            ox[out] = ax + t * (bx - ax)
            oy[out] = ay + t * (by - ay)
            out += 1
    return out


cdef int _clip_box(double* xs, double* ys, int m,
                   double x0, double x1, double y0, double y1) nogil:
    """Clip in place (ping-pong buffers); returns new vertex count."""
    cdef double bx[MAX_CLIP]
    cdef double by0[MAX_CLIP]
    m = _clip_half(xs, ys, m, bx, by0, 0, x0, False)
    m = _clip_half(bx, by0, m, xs, ys, 0, x1, True)
    m = _clip_half(xs, ys, m, bx, by0, 1, y0, False)
    m = _clip_half(bx, by0, m, xs, ys, 1, y1, True)
    return m


def disk_polygon_area(double cx, double cy, double r, verts):
    """Signed area of disk((cx, cy), r) ∩ polygon (CCW positive)."""
    cdef double[:, ::1] v = np.ascontiguousarray(verts, dtype=np.float64)
    cdef int m = v.shape[0]
    cdef int i, j
    cdef double total = 0.0
    if m < 3:
        return 0.0
    for i in range(m):
        j = i + 1 if i + 1 < m else 0
        total += _edge_area(v[i, 0] - cx, v[i, 1] - cy,
                            v[j, 0] - cx, v[j, 1] - cy, r)
    return total


def clip_polygon_to_box(verts, double x0, double x1, double y0, double y1):
    """Clip a convex polygon to the axis-aligned box; returns (k, 2) array."""
    cdef double[:, ::1] v = np.ascontiguousarray(verts, dtype=np.float64)
    cdef int m = v.shape[0]
    cdef double xs[MAX_CLIP]
    cdef double ys[MAX_CLIP]
    cdef int i
    if m > MAX_CLIP - 8:
        raise ValueError("polygon too large for clip buffer")
    for i in range(m):
        xs[i] = v[i, 0]
        ys[i] = v[i, 1]
    m = _clip_box(xs, ys, m, x0, x1, y0, y1)
    if m < 3:
        return np.empty((0, 2), dtype=np.float64)
    out = np.empty((m, 2), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(m):
        o[i, 0] = xs[i]
        o[i, 1] = ys[i]
    return out


def covered_cell_areas(sites, double rho, verts, offsets, box):
    """Per-cell disk ∩ cell ∩ box areas; returns (total, per_cell)."""
    cdef double[:, ::1] s = np.ascontiguousarray(sites, dtype=np.float64)
    cdef double[:, ::1] v = np.ascontiguousarray(verts, dtype=np.float64)
    cdef Py_ssize_t[::1] off = np.ascontiguousarray(offsets, dtype=np.intp)
    cdef double x0 = box[0], x1 = box[1], y0 = box[2], y1 = box[3]
    cdef Py_ssize_t n = s.shape[0]
    per_cell = np.zeros(n, dtype=np.float64)
    cdef double[::1] pc = per_cell
    cdef double xs[MAX_CLIP]
    cdef double ys[MAX_CLIP]
    cdef Py_ssize_t i, lo, hi
    cdef int m, u, w
    cdef double cx, cy, a, total = 0.0

    with nogil:
        for i in range(n):
            lo = off[i]
            hi = off[i + 1]
            m = <int> (hi - lo)
            if m > MAX_CLIP - 8:
                with gil:
                    raise ValueError("cell too large for clip buffer")
            for u in range(m):
                xs[u] = v[lo + u, 0]
                ys[u] = v[lo + u, 1]
            m = _clip_box(xs, ys, m, x0, x1, y0, y1)
            if m < 3:
                continue
            cx = s[i, 0]
            cy = s[i, 1]
            a = 0.0
            for u in range(m):
                w = u + 1 if u + 1 < m else 0
                a += _edge_area(xs[u] - cx, ys[u] - cy,
                                xs[w] - cx, ys[w] - cy, rho)
            pc[i] = a
            total += a
    return total, per_cell
