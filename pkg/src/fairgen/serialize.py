"""JSON with floats at 17 significant digits (lossless float64 round trip)."""

from __future__ import annotations

import json
import math
from typing import Any


def fmt17(v: float) -> str:
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"non-finite float in serialization: {v}")
    return format(v, ".17g")


def dumps_17g(obj: Any, indent: int | None = None) -> str:
    """Serialize like ``json.dumps`` but render every float via fmt17."""

    def render(o: Any, depth: int) -> str:
        pad = "" if indent is None else "\n" + " " * (indent * (depth + 1))
        end = "" if indent is None else "\n" + " " * (indent * depth)
        sep = "," if indent is None else ","
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return fmt17(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [
                f"{pad}{json.dumps(str(k))}: {render(v, depth + 1)}" for k, v in o.items()
            ]
            return "{" + sep.join(items) + end + "}"
        if isinstance(o, (list, tuple)):
            o = list(o)
            if not o:
                return "[]"
            items = [f"{pad}{render(v, depth + 1)}" for v in o]
            return "[" + sep.join(items) + end + "]"
        # numpy scalars/arrays
        if hasattr(o, "tolist"):
            return render(o.tolist(), depth)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return render(obj, 0)
