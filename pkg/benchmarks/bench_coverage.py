"""Benchmark the geometry hot kernel: compiled extension vs pure Python.

The exact coverage score spends nearly all its time in
``covered_cell_areas`` (per-cell disk/polygon clipped areas).  This script
times that kernel under both backends on identical inputs, checks the two
agree to float precision, and reports the speedup.

Usage:
    python3 benchmarks/bench_coverage.py [--sizes 50,200,800] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fairgen import _kernels_py
from fairgen.coverage import CoverageConfig, _voronoi_cells, dedup_points, flatten_cells

try:
    from fairgen import _fastkernels
except ImportError:
    _fastkernels = None


def _kernel_inputs(n: int, seed: int, config: CoverageConfig):
    rng = np.random.default_rng(seed)
    pts = dedup_points(rng.uniform((-2.0, -2.0), (4.0, 4.0), size=(n, 2)))
    cells, _ = _voronoi_cells(pts, config.box)
    verts, offsets = flatten_cells(cells)
    return pts, verts, offsets, np.array(config.box)


def _time_kernel(impl, args, repeats: int) -> tuple[float, float]:
    """(best seconds, total area) over ``repeats`` runs."""
    best = float("inf")
    total = 0.0
    for _ in range(repeats):
        t0 = time.perf_counter()
        total, _per_cell = impl.covered_cell_areas(args[0], CoverageConfig().rho, *args[1:])
        best = min(best, time.perf_counter() - t0)
    return best, float(total)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="50,200,800", help="comma-separated point counts")
    parser.add_argument("--repeats", type=int, default=5, help="timed repeats per size (best wins)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _fastkernels is None:
        print("compiled extension not available; showing pure-Python timings only")

    config = CoverageConfig()
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    header = f"{'n':>6}  {'python':>12}  {'compiled':>12}  {'speedup':>8}  {'max |delta|':>12}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        inputs = _kernel_inputs(n, args.seed, config)
        t_py, area_py = _time_kernel(_kernels_py, inputs, args.repeats)
        if _fastkernels is None:
            print(f"{n:>6}  {t_py * 1e3:>10.2f}ms  {'-':>12}  {'-':>8}  {'-':>12}")
            continue
        t_c, area_c = _time_kernel(_fastkernels, inputs, args.repeats)
        delta = abs(area_py - area_c)
        if delta > 1e-9:
            raise SystemExit(f"backends disagree at n={n}: |delta|={delta:.3e}")
        print(
            f"{n:>6}  {t_py * 1e3:>10.2f}ms  {t_c * 1e3:>10.2f}ms  "
            f"{t_py / t_c:>7.1f}x  {delta:>12.2e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
