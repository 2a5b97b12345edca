"""Disk/polygon geometry kernels, checked against independent oracles.

Oracles: closed-form areas (full disk, circular segment, quarter disk,
shoelace) and Monte-Carlo integration over random convex polygons.  The
pure-Python and compiled backends are also checked against each other.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from fairgen import _kernels_py
from fairgen import kernels

BIG_BOX = np.array([[-50.0, -50.0], [50.0, -50.0], [50.0, 50.0], [-50.0, 50.0]])

BACKENDS = [_kernels_py]
if kernels.BACKEND == "compiled":
    from fairgen import _fastkernels

    BACKENDS.append(_fastkernels)


def shoelace(verts):
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def random_convex_polygon(rng, n_pts=8, scale=2.0):
    pts = rng.normal(scale=scale, size=(n_pts, 2))
    hull = ConvexHull(pts)
    return pts[hull.vertices]  # CCW per scipy convention


def mc_disk_polygon_area(cx, cy, r, verts, n=400_000, seed=0):
    """Monte-Carlo oracle: uniform samples in the disk, test against polygon."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    rad = r * np.sqrt(rng.uniform(0.0, 1.0, n))
    px = cx + rad * np.cos(theta)
    py = cy + rad * np.sin(theta)
    inside = np.ones(n, dtype=bool)
    m = len(verts)
    for i in range(m):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % m]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        inside &= cross >= 0.0
    frac = inside.mean()
    area = math.pi * r * r * frac
    stderr = math.pi * r * r * math.sqrt(max(frac * (1 - frac), 1e-12) / n)
    return area, stderr


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestDiskPolygonArea:
    def test_disk_inside_polygon(self, mod):
        assert mod.disk_polygon_area(1.0, -2.0, 3.0, BIG_BOX) == pytest.approx(
            math.pi * 9.0, rel=1e-12
        )

    def test_polygon_inside_disk(self, mod):
        tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert mod.disk_polygon_area(0.3, 0.3, 10.0, tri) == pytest.approx(0.5, rel=1e-12)

    def test_disjoint(self, mod):
        tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert mod.disk_polygon_area(100.0, 100.0, 1.0, tri) == pytest.approx(0.0, abs=1e-12)

    def test_circular_segment(self, mod):
        # Half-plane x <= a clips the unit disk to a segment-complement:
        # area = pi r^2 - segment(a), segment(a) = r^2 acos(a/r) - a sqrt(r^2-a^2)
        r, a = 1.0, 0.35
        box = np.array([[-50.0, -50.0], [a, -50.0], [a, 50.0], [-50.0, 50.0]])
        seg = r * r * math.acos(a / r) - a * math.sqrt(r * r - a * a)
        expect = math.pi * r * r - seg
        assert mod.disk_polygon_area(0.0, 0.0, r, box) == pytest.approx(expect, rel=1e-12)

    def test_quarter_disk_at_corner(self, mod):
        box = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
        assert mod.disk_polygon_area(0.0, 0.0, 2.0, box) == pytest.approx(
            math.pi, rel=1e-12
        )

    def test_clockwise_polygon_negates(self, mod):
        ccw = BIG_BOX
        cw = BIG_BOX[::-1].copy()
        a1 = mod.disk_polygon_area(0.0, 0.0, 1.5, ccw)
        a2 = mod.disk_polygon_area(0.0, 0.0, 1.5, cw)
        assert a2 == pytest.approx(-a1, rel=1e-12)

    def test_boundary_tangent_circle(self, mod):
        # circle tangent to the box edge from outside: zero overlap
        box = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert mod.disk_polygon_area(-0.5, 0.5, 0.5, box) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("seed", range(6))
    def test_monte_carlo_random_convex(self, mod, seed):
        rng = np.random.default_rng(100 + seed)
        verts = random_convex_polygon(rng)
        cx, cy = rng.normal(scale=1.0, size=2)
        r = rng.uniform(0.3, 2.5)
        exact = mod.disk_polygon_area(cx, cy, r, verts)
        approx, stderr = mc_disk_polygon_area(cx, cy, r, verts, seed=seed)
        assert exact == pytest.approx(approx, abs=max(6 * stderr, 1e-4))

    def test_translation_invariance(self, mod):
        rng = np.random.default_rng(7)
        verts = random_convex_polygon(rng)
        a0 = mod.disk_polygon_area(0.2, -0.3, 1.1, verts)
        shift = np.array([123.0, -45.0])
        a1 = mod.disk_polygon_area(0.2 + shift[0], -0.3 + shift[1], 1.1, verts + shift)
        assert a1 == pytest.approx(a0, rel=1e-9, abs=1e-12)

    def test_scaling_quadratic(self, mod):
        rng = np.random.default_rng(11)
        verts = random_convex_polygon(rng)
        s = 3.7
        a0 = mod.disk_polygon_area(0.1, 0.4, 0.9, verts)
        a1 = mod.disk_polygon_area(0.1 * s, 0.4 * s, 0.9 * s, verts * s)
        assert a1 == pytest.approx(a0 * s * s, rel=1e-10)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestClipPolygonToBox:
    def test_polygon_inside_box(self, mod):
        tri = np.array([[0.1, 0.1], [0.5, 0.2], [0.3, 0.6]])
        out = np.asarray(mod.clip_polygon_to_box(tri, 0.0, 1.0, 0.0, 1.0))
        assert shoelace(out) == pytest.approx(shoelace(tri), rel=1e-12)

    def test_box_inside_polygon(self, mod):
        out = np.asarray(mod.clip_polygon_to_box(BIG_BOX, -2.0, 4.0, -2.0, 4.0))
        assert shoelace(out) == pytest.approx(36.0, rel=1e-12)

    def test_disjoint_returns_empty(self, mod):
        tri = np.array([[10.0, 10.0], [11.0, 10.0], [10.0, 11.0]])
        out = np.asarray(mod.clip_polygon_to_box(tri, 0.0, 1.0, 0.0, 1.0))
        assert out.shape == (0, 2)

    def test_half_overlap_area(self, mod):
        sq = np.array([[-1.0, 0.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 1.0]])
        out = np.asarray(mod.clip_polygon_to_box(sq, 0.0, 5.0, -5.0, 5.0))
        assert shoelace(out) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_random_clip_area_matches_mc(self, mod, seed):
        rng = np.random.default_rng(200 + seed)
        verts = random_convex_polygon(rng)
        x0, y0 = rng.uniform(-2.0, 0.0, 2)
        x1, y1 = x0 + rng.uniform(0.5, 3.0), y0 + rng.uniform(0.5, 3.0)
        out = np.asarray(mod.clip_polygon_to_box(verts, x0, x1, y0, y1))
        area = shoelace(out) if len(out) >= 3 else 0.0
        # MC oracle over the box
        n = 300_000
        px = rng.uniform(x0, x1, n)
        py = rng.uniform(y0, y1, n)
        inside = np.ones(n, dtype=bool)
        m = len(verts)
        for i in range(m):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % m]
            inside &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0.0
        box_area = (x1 - x0) * (y1 - y0)
        frac = inside.mean()
        stderr = box_area * math.sqrt(max(frac * (1 - frac), 1e-12) / n)
        assert area == pytest.approx(box_area * frac, abs=max(6 * stderr, 1e-4))


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestCoveredCellAreas:
    def test_matches_per_cell_calls(self, mod):
        rng = np.random.default_rng(42)
        cells = [random_convex_polygon(rng, n_pts=6) for _ in range(12)]
        sites = rng.normal(size=(12, 2))
        rho = 0.8
        box = (-2.0, 4.0, -2.0, 4.0)
        verts = np.vstack(cells)
        offsets = np.cumsum([0] + [len(c) for c in cells]).astype(np.intp)
        total, per_cell = mod.covered_cell_areas(sites, rho, verts, offsets, np.array(box))
        expect = []
        for c, s in zip(cells, sites):
            clipped = np.asarray(mod.clip_polygon_to_box(c, *box))
            if len(clipped) >= 3:
                expect.append(mod.disk_polygon_area(s[0], s[1], rho, clipped))
            else:
                expect.append(0.0)
        np.testing.assert_allclose(np.asarray(per_cell), expect, rtol=1e-12, atol=1e-15)
        assert total == pytest.approx(sum(expect), rel=1e-12)


@pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled backend unavailable")
class TestBackendParity:
    @pytest.mark.parametrize("seed", range(8))
    def test_disk_polygon_area_parity(self, seed):
        rng = np.random.default_rng(300 + seed)
        verts = random_convex_polygon(rng)
        cx, cy = rng.normal(size=2)
        r = rng.uniform(0.1, 3.0)
        a_py = _kernels_py.disk_polygon_area(cx, cy, r, verts)
        a_c = _fastkernels.disk_polygon_area(cx, cy, r, verts)
        assert a_c == pytest.approx(a_py, rel=1e-13, abs=1e-15)

    @pytest.mark.parametrize("seed", range(4))
    def test_covered_cell_areas_parity(self, seed):
        rng = np.random.default_rng(400 + seed)
        cells = [random_convex_polygon(rng, n_pts=7) for _ in range(20)]
        sites = rng.uniform(-2.0, 4.0, size=(20, 2))
        verts = np.vstack(cells)
        offsets = np.cumsum([0] + [len(c) for c in cells]).astype(np.intp)
        box = np.array([-2.0, 4.0, -2.0, 4.0])
        t_py, p_py = _kernels_py.covered_cell_areas(sites, 0.5, verts, offsets, box)
        t_c, p_c = _fastkernels.covered_cell_areas(sites, 0.5, verts, offsets, box)
        np.testing.assert_allclose(np.asarray(p_c), np.asarray(p_py), rtol=1e-13, atol=1e-15)
        assert t_c == pytest.approx(t_py, rel=1e-13, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(
    cx=st.floats(-3, 3),
    cy=st.floats(-3, 3),
    r=st.floats(0.05, 2.0),
)
def test_area_bounded_by_disk_and_polygon(cx, cy, r):
    verts = np.array([[-1.0, -1.0], [2.0, -1.0], [2.0, 1.5], [-1.0, 1.5]])
    a = kernels.disk_polygon_area(cx, cy, r, verts)
    assert -1e-9 <= a <= min(math.pi * r * r, abs(shoelace(verts))) + 1e-9
