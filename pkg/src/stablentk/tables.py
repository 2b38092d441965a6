"""Plain-text tables and JSON summaries.

Tables are comma separated.  Leading ``#`` lines are free-form header lines
(config digest, parameters); the first non-comment line names the columns.
Floats are written with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .stable import DiscreteSpectralMeasure


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_table(columns: Sequence[str], rows: Iterable[Sequence], header: Sequence[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match the column count")
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_table(path, columns, rows, header=()) -> Path:
    path = Path(path)
    path.write_text(format_table(columns, rows, header))
    return path


def read_table(path_or_text) -> tuple[list[str], list[str], list[list[str]]]:
    """Return ``(header lines, column names, rows as strings)``."""
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text()
    header, cols, rows = [], None, []
    for line in text.splitlines():
        if line.startswith("#"):
            header.append(line[1:].strip())
        elif cols is None:
            cols = line.split(",")
        elif line:
            rows.append(line.split(","))
    if cols is None:
        raise ValueError("table has no column line")
    return header, cols, rows


def measure_table(gamma: DiscreteSpectralMeasure, header: Sequence[str] = ()) -> str:
    """One atom per row: weight, then direction components."""
    cols = ["weight"] + [f"s{j + 1}" for j in range(gamma.dim)]
    hdr = list(header) + [f"dim={gamma.dim}"]
    if gamma.shape is not None:
        hdr.append("shape=" + "x".join(str(n) for n in gamma.shape))
    rows = [[w, *s] for w, s in zip(gamma.weights, gamma.directions)]
    return format_table(cols, rows, hdr)


def parse_measure_table(text: str) -> DiscreteSpectralMeasure:
    header, cols, rows = read_table(text)
    dim = len(cols) - 1
    shape = None
    for h in header:
        if h.startswith("shape="):
            shape = tuple(int(n) for n in h[len("shape="):].split("x"))
    arr = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(-1, dim + 1)
    return DiscreteSpectralMeasure(arr[:, 1:], arr[:, 0], dim=dim, shape=shape)


def matrix_table(M, header: Sequence[str] = ()) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    cols = [f"c{j + 1}" for j in range(M.shape[1])]
    return format_table(cols, M.tolist(), header)


def parse_matrix_table(text: str) -> np.ndarray:
    _, cols, rows = read_table(text)
    return np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(-1, len(cols))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def summary_json(data: dict) -> str:
    """Key-sorted JSON; non-finite floats are written as strings."""
    return json.dumps(_clean(data), indent=2, sort_keys=True) + "\n"
