"""Canonical JSON: sorted keys, floats at 12 significant digits, UTF-8."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

FLOAT_DIGITS = 12


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    if x == 0:
        return "0.0"
    text = format(x, f".{FLOAT_DIGITS}g")
    if "e" not in text and "." not in text:
        text += ".0"
    return text


def _encode(obj, indent: int | None, level: int) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        parts = [f"{json.dumps(k, ensure_ascii=False)}: {_encode(v, indent, level + 1)}" for k, v in items]
        return _wrap("{", "}", parts, indent, level)
    if isinstance(obj, (list, tuple, np.ndarray)):
        parts = [_encode(v, indent, level + 1) for v in obj]
        return _wrap("[", "]", parts, indent, level)
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _wrap(open_, close, parts, indent, level):
    if not parts:
        return open_ + close
    if indent is None:
        return open_ + ", ".join(parts) + close
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    return open_ + "\n" + ",\n".join(pad + p for p in parts) + "\n" + end + close


def canonical_dumps(obj, indent: int | None = 2) -> str:
    return _encode(obj, indent, 0)


def write_canonical_json(obj, path) -> None:
    Path(path).write_text(canonical_dumps(obj) + "\n", encoding="utf-8")


def round_float(x):
    """Round to the canonical precision, leaving None untouched."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(format(x, f".{FLOAT_DIGITS}g"))
