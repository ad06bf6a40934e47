"""CSV and SVG writers. Output bytes depend only on the data passed in."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..dynamics import check_signals
from ..lattice import LatticeCity

TRACE_HEADER = ["t", "method", "alpha", "eta", "seed", "H", "m"]
SUMMARY_HEADER = [
    "method", "alpha", "eta", "H_mean", "H_std", "m_mean", "m_std",
    "lambda_t", "omega_t", "lambda_s", "omega_s",
]
CALIBRATION_HEADER = ["theta", "H_bar"]
FITS_HEADER = [
    "method", "alpha", "eta", "seed", "H_bar", "m_bar",
    "lambda_t", "omega_t", "residual_t", "lambda_s", "omega_s", "residual_s",
]
CURVE_HEADER = ["method", "alpha", "eta", "seed", "kind", "z", "R"]
RATIO_HEADER = ["alpha", "eta", "H_partitioned", "H_unpartitioned", "ratio"]

RED = "#d62728"  # sigma = +1, north-south allowed
BLUE = "#1f77b4"  # sigma = -1, east-west allowed


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(buf.getvalue().encode())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def snapshot_svg(sigma: np.ndarray, city: LatticeCity, cell: int = 10) -> str:
    sigma = check_signals(sigma, city.n)
    L = city.L
    r = cell * 0.4
    size = L * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="#ffffff"/>',
    ]
    for i in range(city.n):
        row, col = divmod(i, L)
        color = RED if sigma[i] == 1 else BLUE
        cx = col * cell + cell / 2
        cy = row * cell + cell / 2
        parts.append(f'<circle cx="{cx:g}" cy="{cy:g}" r="{r:g}" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_snapshot(sigma: np.ndarray, city: LatticeCity, path) -> Path:
    """Write an SVG with one dot per intersection: red for +1, blue for -1."""
    path = Path(path)
    text = snapshot_svg(sigma, city)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode())
    return path
