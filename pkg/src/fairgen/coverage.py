"""Coverage of a 2-D standardized property space.

A query point is *covered* when at least ``k`` data points lie within
distance ``rho`` of it (boundary inclusive).  The coverage score is the area
of the covered region inside a fixed scoring box.  Two routes compute it:

* ``exact`` (k=1 only): the covered region is the union of radius-``rho``
  disks.  Decomposing the plane into nearest-site (Voronoi) cells makes the
  per-cell pieces disjoint, and each piece — disk ∩ convex cell ∩ box — has
  a closed-form area.
* ``raster``: count data points within ``rho`` of each grid-cell center and
  sum the cell areas where the count reaches ``k``.  Works for any ``k`` and
  serves as an independent check on the exact route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from . import kernels
from .errors import DomainError, NumericError, UnsupportedConfigError

#: default scoring box in standardized property units: (xmin, xmax, ymin, ymax)
DEFAULT_BOX = (-2.0, 4.0, -2.0, 4.0)


@dataclass(frozen=True)
class CoverageConfig:
    rho: float = 0.08
    k: int = 1
    box: tuple[float, float, float, float] = DEFAULT_BOX
    raster_h: float = 0.005

    def __post_init__(self) -> None:
        if not (self.rho > 0.0 and math.isfinite(self.rho)):
            raise DomainError(f"rho must be positive, got {self.rho}")
        if self.k < 1:
            raise DomainError(f"k must be >= 1, got {self.k}")
        x0, x1, y0, y1 = self.box
        if not (x1 > x0 and y1 > y0):
            raise DomainError(f"degenerate scoring box {self.box}")
        if not (0.0 < self.raster_h <= min(x1 - x0, y1 - y0)):
            raise DomainError(f"raster_h out of range: {self.raster_h}")

    @property
    def box_area(self) -> float:
        x0, x1, y0, y1 = self.box
        return (x1 - x0) * (y1 - y0)


@dataclass
class VoronoiDiagram:
    """Nearest-site decomposition, cells clipped to the scoring box."""

    sites: np.ndarray  # (n, 2) deduplicated
    cells: list[np.ndarray]  # per site, CCW polygon clipped to box (may be empty)
    adjacency: set[tuple[int, int]] = field(default_factory=set)


@dataclass
class CoverageReport:
    score: float
    method: str  # "exact" | "raster"
    per_cell_area: np.ndarray | None = None  # exact route only


def _as_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError(f"expected an (n, 2) point array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points contain non-finite values")
    return pts


def is_covered(q: np.ndarray, points: np.ndarray, rho: float, k: int = 1) -> bool:
    """True iff at least k data points lie within rho of q (boundary counts)."""
    if not (rho > 0.0 and k >= 1):
        raise DomainError(f"need rho > 0 and k >= 1, got rho={rho}, k={k}")
    pts = _as_points(points)
    if len(pts) == 0:
        return False
    q = np.asarray(q, dtype=float)
    d2 = np.sum((pts - q) ** 2, axis=1)
    return int(np.count_nonzero(d2 <= rho * rho)) >= k


def dedup_points(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Collapse clusters of points closer than ``tol`` to one representative.

    Keeps the first point of each cluster, in input order.  Needed before the
    Voronoi build: (near-)coincident sites produce degenerate cells.
    """
    pts = _as_points(points)
    n = len(pts)
    if n < 2:
        return pts
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return pts
    parent = np.arange(n)

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    keep = np.array([find(i) == i for i in range(n)])
    return pts[keep]


def _mirrored_sites(pts: np.ndarray, box: tuple[float, float, float, float]) -> np.ndarray:
    """Original sites plus reflections across an inflated bounding frame.

    The frame contains all sites and the scoring box with margin, so inside
    it the nearest mirrored copy is never closer than the nearest original:
    every original site gets a bounded Voronoi cell, and the cells of the
    originals exactly tile the frame.
    """
    x0 = min(float(pts[:, 0].min()), box[0]) - 1.0
    x1 = max(float(pts[:, 0].max()), box[1]) + 1.0
    y0 = min(float(pts[:, 1].min()), box[2]) - 1.0
    y1 = max(float(pts[:, 1].max()), box[3]) + 1.0
    left = np.column_stack((2.0 * x0 - pts[:, 0], pts[:, 1]))
    right = np.column_stack((2.0 * x1 - pts[:, 0], pts[:, 1]))
    bottom = np.column_stack((pts[:, 0], 2.0 * y0 - pts[:, 1]))
    top = np.column_stack((pts[:, 0], 2.0 * y1 - pts[:, 1]))
    return np.vstack((pts, left, right, bottom, top))


def _frame_cell(pts: np.ndarray, box: tuple[float, float, float, float]) -> np.ndarray:
    """The single-site cell: the whole inflated frame (n=1 has no bisectors)."""
    frame = _mirrored_sites(pts, box)  # row 0 original, rows 1-4 reflections
    x0, x1 = frame[1, 0], frame[2, 0]
    y0, y1 = frame[3, 1], frame[4, 1]
    # bisector between the site and each reflection is the frame edge itself
    ex0, ex1 = 0.5 * (pts[0, 0] + x0), 0.5 * (pts[0, 0] + x1)
    ey0, ey1 = 0.5 * (pts[0, 1] + y0), 0.5 * (pts[0, 1] + y1)
    return np.array([[ex0, ey0], [ex1, ey0], [ex1, ey1], [ex0, ey1]])


def _voronoi_cells(
    pts: np.ndarray, box: tuple[float, float, float, float]
) -> tuple[list[np.ndarray], set[tuple[int, int]]]:
    """Unclipped bounded cells (CCW) and original-site adjacency pairs.

    ``pts`` must be deduplicated and nonempty.
    """
    n = len(pts)
    if n == 1:
        return [_frame_cell(pts, box)], set()
    vor = Voronoi(_mirrored_sites(pts, box))
    cells: list[np.ndarray] = []
    for i in range(n):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise NumericError(f"unbounded or degenerate cell for site {i}")
        verts = vor.vertices[region]
        ang = np.arctan2(verts[:, 1] - pts[i, 1], verts[:, 0] - pts[i, 0])
        cells.append(verts[np.argsort(ang, kind="stable")])
    adjacency = {
        (int(min(a, b)), int(max(a, b)))
        for a, b in vor.ridge_points
        if a < n and b < n
    }
    return cells, adjacency


def build_voronoi(
    points: np.ndarray,
    box: tuple[float, float, float, float] = DEFAULT_BOX,
) -> VoronoiDiagram:
    """First-order Voronoi diagram of the points, cells clipped to the box."""
    pts = dedup_points(points)
    if len(pts) == 0:
        raise DomainError("no points given")
    x0, x1, y0, y1 = box
    inside = (
        (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
    )
    if not np.any(inside):
        raise DomainError("all points lie outside the box")
    raw_cells, adjacency = _voronoi_cells(pts, box)
    cells = [np.asarray(kernels.clip_polygon_to_box(c, x0, x1, y0, y1)) for c in raw_cells]
    return VoronoiDiagram(sites=pts, cells=cells, adjacency=adjacency)


def flatten_cells(cells: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate cell polygons for the batched area kernel."""
    if not cells:
        return np.empty((0, 2)), np.zeros(1, dtype=np.intp)
    verts = np.ascontiguousarray(np.vstack([c for c in cells if len(c)]))
    offsets = np.zeros(len(cells) + 1, dtype=np.intp)
    np.cumsum([len(c) for c in cells], out=offsets[1:])
    return verts, offsets


def _exact_per_cell(points: np.ndarray, config: CoverageConfig) -> tuple[float, np.ndarray]:
    pts = dedup_points(points)
    if len(pts) == 0:
        return 0.0, np.zeros(0)
    cells, _ = _voronoi_cells(pts, config.box)
    verts, offsets = flatten_cells(cells)
    total, per_cell = kernels.covered_cell_areas(
        pts, config.rho, verts, offsets, np.array(config.box)
    )
    return max(0.0, float(total)), np.asarray(per_cell)


def covered_area_exact(points: np.ndarray, config: CoverageConfig) -> float:
    """Exact area of the covered region inside the scoring box (k=1 only)."""
    if config.k != 1:
        raise UnsupportedConfigError(
            f"exact coverage requires k=1 (union of disks); got k={config.k}. "
            "Use the raster route for k > 1."
        )
    total, _ = _exact_per_cell(points, config)
    return total


def covered_area_raster(
    points: np.ndarray, config: CoverageConfig, h: float | None = None
) -> float:
    """Raster covered area: grid-center membership counts, any k >= 1.

    Duplicated data points legitimately count separately toward ``k``, so no
    deduplication here.
    """
    pts = _as_points(points)
    x0, x1, y0, y1 = config.box
    if h is None:
        h = config.raster_h
    if not 0.0 < h <= min(x1 - x0, y1 - y0):
        raise DomainError(f"raster pitch out of range: {h}")
    nx = max(1, int(round((x1 - x0) / h)))
    ny = max(1, int(round((y1 - y0) / h)))
    if len(pts) == 0:
        return 0.0
    cx = x0 + (np.arange(nx) + 0.5) * h
    cy = y0 + (np.arange(ny) + 0.5) * h
    counts = np.zeros((ny, nx), dtype=np.int32)
    r2 = config.rho * config.rho
    for sx, sy in pts:
        ix0 = int(np.searchsorted(cx, sx - config.rho, side="left"))
        ix1 = int(np.searchsorted(cx, sx + config.rho, side="right"))
        iy0 = int(np.searchsorted(cy, sy - config.rho, side="left"))
        iy1 = int(np.searchsorted(cy, sy + config.rho, side="right"))
        if ix0 >= ix1 or iy0 >= iy1:
            continue
        dx2 = (cx[ix0:ix1] - sx) ** 2
        dy2 = (cy[iy0:iy1] - sy) ** 2
        counts[iy0:iy1, ix0:ix1] += dy2[:, None] + dx2[None, :] <= r2
    return float(np.count_nonzero(counts >= config.k)) * h * h


def coverage_score(
    std_points: np.ndarray,
    config: CoverageConfig | None = None,
    method: str = "auto",
) -> float:
    """Coverage score of a standardized property point set.

    ``method="auto"`` takes the exact route for k=1 and the raster route
    otherwise; "exact"/"raster" force one.
    """
    if config is None:
        config = CoverageConfig()
    if method == "auto":
        method = "exact" if config.k == 1 else "raster"
    if method == "exact":
        return covered_area_exact(std_points, config)
    if method == "raster":
        return covered_area_raster(std_points, config)
    raise DomainError(f"unknown coverage method {method!r}; use 'auto', 'exact' or 'raster'")


def coverage_report(
    std_points: np.ndarray,
    config: CoverageConfig | None = None,
    method: str = "auto",
) -> CoverageReport:
    """Coverage score plus per-cell covered areas (exact route)."""
    if config is None:
        config = CoverageConfig()
    if method == "auto":
        method = "exact" if config.k == 1 else "raster"
    if method == "exact":
        if config.k != 1:
            raise UnsupportedConfigError("exact coverage requires k=1")
        total, per_cell = _exact_per_cell(std_points, config)
        return CoverageReport(score=total, method="exact", per_cell_area=per_cell)
    if method == "raster":
        return CoverageReport(
            score=covered_area_raster(std_points, config), method="raster"
        )
    raise DomainError(f"unknown coverage method {method!r}")


def _require_in_box(pts: np.ndarray, box: tuple[float, float, float, float]) -> None:
    x0, x1, y0, y1 = box
    ok = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
    if not np.all(ok):
        bad = pts[~ok][0]
        raise DomainError(f"candidate point {bad.tolist()} outside scoring box {box}")


def coverage_gain(
    existing: np.ndarray,
    candidates: np.ndarray,
    config: CoverageConfig | None = None,
    method: str = "auto",
    base_score: float | None = None,
) -> float:
    """Added covered area from candidate points; clamped at zero.

    Candidates must lie inside the scoring box.  ``base_score``
    short-circuits recomputing the existing-set score when the caller
    already has it.
    """
    if config is None:
        config = CoverageConfig()
    existing = _as_points(existing)
    candidates = _as_points(candidates)
    _require_in_box(candidates, config.box)
    if base_score is None:
        base_score = coverage_score(existing, config, method)
    combined = np.vstack((existing, candidates)) if len(existing) else candidates
    return max(0.0, coverage_score(combined, config, method) - base_score)
