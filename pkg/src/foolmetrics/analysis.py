"""Fooling-pattern analyses built on top of the metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import metrics as M
from .errors import (
    EmptyRecordSet,
    EmptySubsetIntersection,
    InvariantViolation,
    LabelSpaceMismatch,
    NoFlips,
    ShapeMismatch,
    TooFewMatrices,
)
from .taxonomy import Taxonomy
from .visual_sim import VisualSimilarityMatrix


@dataclass(frozen=True)
class CategorySubset:
    name: str
    members: frozenset

    def __post_init__(self):
        m = frozenset(int(c) for c in self.members)
        if not m:
            raise InvariantViolation(f"category subset {self.name!r} is empty")
        if min(m) < 0:
            raise InvariantViolation(f"category subset {self.name!r} has a negative class id")
        object.__setattr__(self, "members", m)

    def check(self, class_count: int):
        if max(self.members) >= class_count:
            raise InvariantViolation(f"subset {self.name!r} has members outside 0..{class_count - 1}")


def dominant_label_coverage(rs: M.RecordSet) -> float:
    """Share of the label space reached by post-attack labels of fooled
    samples.  Small values mean a few sink classes absorb the flips."""
    if len(rs) == 0:
        raise EmptyRecordSet("record set is empty")
    sinks = {r.post_label for r in rs.records if r.flipped}
    if not sinks:
        raise NoFlips("no flipped records")
    return len(sinks) / rs.class_count


def sink_histogram(rs: M.RecordSet) -> dict:
    counts = {}
    for r in rs.records:
        if r.flipped:
            counts[r.post_label] = counts.get(r.post_label, 0) + 1
    return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def fine_grained_confusion(rs: M.RecordSet, s: CategorySubset) -> float:
    """Among flipped records whose pre-attack label is in ``s``, fraction
    whose post-attack label is also in ``s``.  Returns 0.0 when the subset
    has samples but none of them flipped."""
    s.check(rs.class_count)
    inside = [r for r in rs.records if r.pre_label in s.members]
    if not inside:
        raise EmptySubsetIntersection(f"no records with pre-attack label in {s.name!r}")
    fooled = [r for r in inside if r.flipped]
    if not fooled:
        return 0.0
    return sum(r.post_label in s.members for r in fooled) / len(fooled)


def cross_model_similarity_variance(mats: Sequence) -> tuple[np.ndarray, float, float]:
    """Element-wise population variance across models, plus mean and std of
    that variance over off-diagonal class pairs."""
    if len(mats) < 2:
        raise TooFewMatrices("need at least two similarity matrices")
    arrs = [np.asarray(m.matrix if isinstance(m, VisualSimilarityMatrix) else m, dtype=float) for m in mats]
    shape = arrs[0].shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ShapeMismatch(f"similarity matrices must be square, got {shape}")
    for a in arrs[1:]:
        if a.shape != shape:
            raise ShapeMismatch(f"shape {a.shape} != {shape}")
    # sum of squared pairwise differences over n^2 equals the population
    # variance and is exactly zero when every matrix is identical
    n = len(arrs)
    var = np.zeros(shape)
    for i in range(n):
        for j in range(i + 1, n):
            var += (arrs[i] - arrs[j]) ** 2
    var /= n * n
    off = var[~np.eye(shape[0], dtype=bool)]
    if off.size == 0:
        return var, 0.0, 0.0
    return var, float(off.mean()), float(off.std())


@dataclass
class ReportRow:
    attack: str
    model: str
    records: int
    fooling_rate: float
    fr_curve: list
    auc: float
    mean_qi_wup: Optional[float]
    mean_qi_vis: Optional[float]
    dominant_label_coverage: Optional[float]
    fine_grained: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "attack": self.attack,
            "model": self.model,
            "records": self.records,
            "fooling_rate": self.fooling_rate,
            "fr_curve": [[k, v] for k, v in self.fr_curve],
            "auc": self.auc,
            "mean_qi_wup": self.mean_qi_wup,
            "mean_qi_vis": self.mean_qi_vis,
            "dominant_label_coverage": self.dominant_label_coverage,
            "fine_grained": dict(self.fine_grained),
        }


@dataclass
class ComparisonReport:
    rows: list
    config: M.MetricConfig
    class_count: int

    def row(self, attack: str, model: Optional[str] = None) -> ReportRow:
        for r in self.rows:
            if r.attack == attack and (model is None or r.model == model):
                return r
        raise KeyError((attack, model))

    def as_dict(self) -> dict:
        return {
            "class_count": self.class_count,
            "semantic_threshold": self.config.semantic_threshold,
            "visual_threshold": self.config.visual_threshold,
            "k_grid": list(self.config.grid_for(self.class_count)),
            "rows": [r.as_dict() for r in self.rows],
        }

    def to_csv(self) -> str:
        grid = self.config.grid_for(self.class_count)
        subset_names = sorted({n for r in self.rows for n in r.fine_grained})
        cols = (["attack", "model", "records", "fooling_rate", "auc", "mean_qi_wup", "mean_qi_vis",
                 "dominant_label_coverage"]
                + [f"fr@{k}" for k in grid] + [f"fine_grained:{n}" for n in subset_names])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            curve = dict(r.fr_curve)
            w.writerow([r.attack, r.model, r.records, _fmt(r.fooling_rate), _fmt(r.auc), _fmt(r.mean_qi_wup),
                        _fmt(r.mean_qi_vis), _fmt(r.dominant_label_coverage)]
                       + [_fmt(curve[k]) for k in grid]
                       + [_fmt(r.fine_grained.get(n)) for n in subset_names])
        return buf.getvalue()


def _fmt(x):
    return "" if x is None else repr(float(x))


def comparison_report(
    runs: Iterable[tuple[str, M.RecordSet]],
    cfg: M.MetricConfig = M.MetricConfig(),
    t: Optional[Taxonomy] = None,
    v: Optional[VisualSimilarityMatrix] = None,
    subsets: Sequence[CategorySubset] = (),
) -> ComparisonReport:
    """One row of metrics per named run.  Semantic and visual columns are
    left empty when no taxonomy / similarity matrix is supplied."""
    runs = list(runs)
    if not runs:
        raise ValueError("no runs given")
    c = runs[0][1].class_count
    for name, rs in runs:
        if rs.class_count != c:
            raise LabelSpaceMismatch(f"run {name!r} has {rs.class_count} classes, expected {c}")
    if v is not None and v.class_count != c:
        raise LabelSpaceMismatch(f"similarity matrix covers {v.class_count} classes, records have {c}")
    if t is not None:
        missing = [k for k in range(c) if k not in t.label_map]
        if missing:
            raise LabelSpaceMismatch(f"taxonomy does not map labels {missing[:5]}")
    for s in subsets:
        s.check(c)

    rows = []
    for name, rs in runs:
        curve = M.fr_curve(rs, cfg)
        try:
            coverage = dominant_label_coverage(rs)
        except NoFlips:
            coverage = None
        fine = {}
        for s in subsets:
            try:
                fine[s.name] = fine_grained_confusion(rs, s)
            except EmptySubsetIntersection:
                fine[s.name] = None
        rows.append(ReportRow(
            attack=name,
            model=rs.model,
            records=len(rs),
            fooling_rate=M.fooling_rate(rs),
            fr_curve=curve,
            auc=M.auc(curve) if len(curve) >= 2 else None,
            mean_qi_wup=M.mean_qi(rs, M.SEMANTIC, t, cfg.semantic_threshold) if t is not None else None,
            mean_qi_vis=M.mean_qi(rs, M.VISUAL, v, cfg.visual_threshold) if v is not None else None,
            dominant_label_coverage=coverage,
            fine_grained=fine,
        ))
    return ComparisonReport(rows, cfg, c)
