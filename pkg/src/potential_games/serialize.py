"""Lossless text serialization: every float is written with 17 significant digits."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, is_dataclass

import numpy as np


def fmt(x: float) -> str:
    return format(float(x), ".17g")


_MARK = "\x00F"
_MARKED = re.compile(r'"\\u0000F([^"]*)"')


def _prepare(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = asdict(obj)
    if isinstance(obj, dict):
        return {str(k): _prepare(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prepare(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_prepare(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return None
        return _MARK + fmt(obj)
    return obj


def dumps_json(obj, indent: int = 2) -> str:
    """``json.dumps`` with sorted keys and 17-digit floats (non-finite -> null)."""
    text = json.dumps(_prepare(obj), indent=indent, sort_keys=True)
    return _MARKED.sub(r"\1", text) + "\n"
