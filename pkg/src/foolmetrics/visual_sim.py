"""Model-perceived visual similarity from final-layer class templates.

Each row of the classifier's last affine layer is treated as the template
of its class; two classes are visually similar when their templates point
the same way.  Also holds the nearest-rank percentile tools used to pick a
similarity threshold at the knee of the distribution.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    IndexOutOfRange,
    InvalidPercentile,
    ParseError,
    ZeroNormRow,
)


@dataclass(frozen=True)
class WeightTemplates:
    weights: np.ndarray  # (C, D), row c is the template of class c

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2:
            raise DimensionMismatch(f"templates must be 2-D, got shape {w.shape}")
        norms = np.linalg.norm(w, axis=1)
        bad = np.flatnonzero(norms == 0)
        if bad.size:
            raise ZeroNormRow(int(bad[0]))
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class VisualSimilarityMatrix:
    matrix: np.ndarray
    source: str = ""

    @property
    def class_count(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, ij):
        i, j = ij
        c = self.class_count
        if not (0 <= i < c and 0 <= j < c):
            raise IndexOutOfRange(f"class pair ({i}, {j}) outside 0..{c - 1}")
        return float(self.matrix[i, j])

    def off_diagonal(self) -> np.ndarray:
        c = self.class_count
        return self.matrix[~np.eye(c, dtype=bool)]


def templates_from_rows(rows: Iterable[Sequence[float]]) -> WeightTemplates:
    rows = [list(map(float, r)) for r in rows]
    if not rows:
        raise EmptyInput("no template rows")
    d = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != d:
            raise DimensionMismatch(f"row {i} has {len(r)} entries, expected {d}")
    return WeightTemplates(np.array(rows))


def vis_similarity(w: WeightTemplates, i: int, j: int) -> float:
    c = w.class_count
    if not (0 <= i < c and 0 <= j < c):
        raise IndexOutOfRange(f"class pair ({i}, {j}) outside 0..{c - 1}")
    if i == j:
        return 1.0
    a, b = w.weights[i], w.weights[j]
    s = float(a @ b) / (math.sqrt(float(a @ a)) * math.sqrt(float(b @ b)))
    return min(1.0, max(-1.0, s))


def pairwise_vis_matrix(w: WeightTemplates, source: str = "") -> VisualSimilarityMatrix:
    unit = w.weights / np.linalg.norm(w.weights, axis=1, keepdims=True)
    m = unit @ unit.T
    m = 0.5 * (m + m.T)
    np.clip(m, -1.0, 1.0, out=m)
    np.fill_diagonal(m, 1.0)
    m.setflags(write=False)
    return VisualSimilarityMatrix(m, source)


def percentile_curve(values) -> list[tuple[int, float]]:
    """Nearest-rank percentiles 1..100 of ``values``.

    The value reported at percentile ``p`` is the smallest ``v`` with at
    least ``p`` percent of the inputs ``<= v``.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    n = v.size
    if n == 0:
        raise EmptyInput("percentile curve of an empty set")
    out = []
    for p in range(1, 101):
        # integer arithmetic keeps ceil(p*n/100) exact
        rank = max(1, -(-p * n // 100))
        out.append((p, float(v[rank - 1])))
    return out


def knee_threshold(curve: Sequence[tuple[int, float]], p: int = 95) -> float:
    if not (1 <= p <= 100) or int(p) != p:
        raise InvalidPercentile(f"percentile must be an integer in [1, 100], got {p}")
    for q, value in curve:
        if q == p:
            return value
    raise InvalidPercentile(f"percentile {p} not present in curve")


# -- file formats ------------------------------------------------------------

def _data_lines(text):
    return [ln for ln in io.StringIO(text) if ln.strip() and not ln.lstrip().startswith("#")]


def parse_templates(text: str, path=None) -> WeightTemplates:
    """Parse ``class_id,w_0,...,w_{D-1}`` CSV; class ids must run 0..C-1."""
    lines = _data_lines(text)
    if not lines:
        raise ParseError("empty template file", path)
    reader = csv.reader(lines)
    header = next(reader)
    if not header or header[0].strip() != "class_id":
        raise ParseError("header must start with 'class_id'", path, 1)
    d = len(header) - 1
    if d < 1:
        raise ParseError("header declares no weight columns", path, 1)
    rows = []
    for k, row in enumerate(reader, start=2):
        if len(row) - 1 != d:
            raise DimensionMismatch(
                f"{path or '<templates>'}: row for class {row[0] if row else '?'} has "
                f"{len(row) - 1} weights, expected {d}"
            )
        try:
            cid = int(row[0])
            vals = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise ParseError(f"bad number ({exc})", path, k) from None
        if cid != len(rows):
            raise ParseError(f"class ids must be dense and ordered; expected {len(rows)}, got {cid}", path, k)
        rows.append(vals)
    if not rows:
        raise ParseError("no template rows", path)
    return WeightTemplates(np.array(rows))


def read_templates(path: str | PathLike) -> WeightTemplates:
    with open(path, encoding="utf-8") as fh:
        return parse_templates(fh.read(), path=str(path))


load_templates = read_templates


def format_templates(w: WeightTemplates, header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class_id"] + [f"w_{k}" for k in range(w.feature_dim)])
    for c, row in enumerate(w.weights):
        writer.writerow([c] + [repr(float(x)) for x in row])
    return buf.getvalue()


def write_templates(w: WeightTemplates, path: str | PathLike, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_templates(w, header))


def format_matrix(m: VisualSimilarityMatrix | np.ndarray, header: Optional[str] = None) -> str:
    arr = m.matrix if isinstance(m, VisualSimilarityMatrix) else np.asarray(m)
    head = f"# {header}\n" if header else ""
    return head + "".join(",".join(f"{x:.9g}" for x in row) + "\n" for row in arr)


def write_matrix(m, path: str | PathLike, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_matrix(m, header))
