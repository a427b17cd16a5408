"""Byte-stable JSON rendering.

Artifacts written by this package must be byte-identical across runs, so
json.dumps (whose float repr is version-dependent policy) is not used for
output. Keys are sorted and floats are rendered with 17 significant digits,
which round-trips any float64 exactly.
"""

from __future__ import annotations

import json

import numpy as np


def _render(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ValueError(f"non-finite value {x!r} is not serializable")
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"non-string key {key!r}")
            items.append(f"{json.dumps(key)}:{_render(obj[key])}")
        return "{" + ",".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_render(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _render(obj.tolist())
    raise TypeError(f"unsupported type {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Render obj as a single-line JSON string with stable bytes."""
    return _render(obj)


def parse_json(text: str):
    return json.loads(text)
