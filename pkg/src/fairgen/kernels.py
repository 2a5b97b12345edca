"""Backend selection for the geometry hot kernels.

Prefers the compiled extension; falls back to the pure-Python implementation
when the extension is unavailable.  Set ``FAIRGEN_BACKEND=python`` or
``FAIRGEN_BACKEND=compiled`` to force a backend (the latter raises if the
extension failed to build).
"""

from __future__ import annotations

import os

from . import _kernels_py

_requested = os.environ.get("FAIRGEN_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = _kernels_py
    BACKEND = "python"
elif _requested in ("", "compiled"):
    try:
        from . import _fastkernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _kernels_py
        BACKEND = "python"
else:
    raise RuntimeError(
        f"unknown FAIRGEN_BACKEND value {_requested!r}; use 'python' or 'compiled'"
    )

disk_polygon_area = _impl.disk_polygon_area
clip_polygon_to_box = _impl.clip_polygon_to_box
covered_cell_areas = _impl.covered_cell_areas

__all__ = [
    "BACKEND",
    "disk_polygon_area",
    "clip_polygon_to_box",
    "covered_cell_areas",
]
