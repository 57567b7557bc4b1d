"""Deterministic CSV helpers: headers always, floats at 17 significant digits."""

from __future__ import annotations

import csv
from pathlib import Path


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def read_matrix(path) -> "np.ndarray":
    import numpy as np

    header, rows = read_csv(path)
    return np.array([[float(v) for v in row] for row in rows])
