"""Deterministic JSON and CSV serialization.

Floats are rounded to 9 significant digits before writing, so re-emitting a
parsed file reproduces it byte for byte.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SIGNIFICANT_DIGITS = 9


def round_float(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def normalize(obj):
    """Plain JSON types with every float rounded; numpy values converted."""
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [normalize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj) -> str:
    return json.dumps(normalize(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _cell(x) -> str:
    return f"{float(x):.{SIGNIFICANT_DIGITS}g}"


def dumps_csv(header, columns) -> str:
    columns = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len(header) != len(columns) or len({c.size for c in columns}) > 1:
        raise ValueError("header and columns must match and columns must have equal length")
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in zip(*columns)]
    return "\n".join(lines) + "\n"


def write_csv(path, header, columns) -> Path:
    path = Path(path)
    path.write_text(dumps_csv(header, columns))
    return path


def read_csv(path):
    """(header, columns) with columns as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return header, [data[:, k] for k in range(len(header))]
