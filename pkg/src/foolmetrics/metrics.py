"""Record-level and aggregate fooling metrics.

All metrics are folds over a :class:`RecordSet`: the plain fooling rate,
the rank-aware FR@K and its area under the curve, and the quantized
semantic (QI-Wup) and visual (QI-Vis) confusion scores with their
targeted variants and threshold sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyRecordSet,
    EmptyThresholds,
    InvalidK,
    InvariantViolation,
    MissingTarget,
    TooFewPoints,
)
from .taxonomy import Taxonomy, wup_similarity
from .visual_sim import VisualSimilarityMatrix

STANDARD_K_GRID = (1, 2, 5, 10, 20, 50, 100)
SEMANTIC = "semantic"
VISUAL = "visual"


@dataclass(frozen=True)
class PredictionRecord:
    record_id: str
    pre_label: int
    post_ranking: tuple  # class ids, most confident first
    pre_label_rank: int  # 1-based position of pre_label in post_ranking
    target_label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "post_ranking", tuple(int(c) for c in self.post_ranking))
        self.validate()

    @classmethod
    def from_ranking(cls, record_id, pre_label, post_ranking, target_label=None):
        ranking = tuple(int(c) for c in post_ranking)
        try:
            rank = ranking.index(int(pre_label)) + 1
        except ValueError:
            raise InvariantViolation("pre_label missing from post_ranking", record_id) from None
        return cls(str(record_id), int(pre_label), ranking, rank, target_label)

    def validate(self):
        r = self.post_ranking
        c = len(r)
        if sorted(r) != list(range(c)):
            raise InvariantViolation("post_ranking is not a permutation of 0..C-1", self.record_id)
        if not (1 <= self.pre_label_rank <= c) or r[self.pre_label_rank - 1] != self.pre_label:
            raise InvariantViolation(
                f"pre_label_rank {self.pre_label_rank} does not point at pre_label {self.pre_label}",
                self.record_id,
            )
        if self.target_label is not None and not (0 <= self.target_label < c):
            raise InvariantViolation(f"target_label {self.target_label} outside 0..{c - 1}", self.record_id)

    @property
    def post_label(self) -> int:
        return self.post_ranking[0]

    @property
    def flipped(self) -> bool:
        return self.pre_label_rank > 1


@dataclass
class RecordSet:
    records: list
    class_count: int
    attack: str = ""
    model: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = list(self.records)
        seen = set()
        for r in self.records:
            if len(r.post_ranking) != self.class_count:
                raise InvariantViolation(
                    f"ranking length {len(r.post_ranking)} != class count {self.class_count}", r.record_id
                )
            if r.record_id in seen:
                raise InvariantViolation("duplicate record id", r.record_id)
            seen.add(r.record_id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @cached_property
    def ranks(self) -> np.ndarray:
        return np.array([r.pre_label_rank for r in self.records], dtype=int)

    @cached_property
    def pre_labels(self) -> np.ndarray:
        return np.array([r.pre_label for r in self.records], dtype=int)

    @cached_property
    def post_labels(self) -> np.ndarray:
        return np.array([r.post_ranking[0] for r in self.records], dtype=int)

    def flipped(self) -> list:
        return [r for r in self.records if r.flipped]


@dataclass(frozen=True)
class MetricConfig:
    """Thresholds and K grid.  ``k_grid=None`` means the standard grid
    truncated to the values below the class count."""

    semantic_threshold: float = 0.7
    visual_threshold: float = 0.1
    k_grid: Optional[tuple] = None

    def __post_init__(self):
        if self.k_grid is not None:
            g = tuple(int(k) for k in self.k_grid)
            if not g or any(k < 1 for k in g) or any(b <= a for a, b in zip(g, g[1:])):
                raise InvalidK(f"k_grid must be strictly increasing positive integers, got {self.k_grid}")
            object.__setattr__(self, "k_grid", g)

    def grid_for(self, class_count: int) -> tuple:
        if self.k_grid is None:
            return tuple(k for k in STANDARD_K_GRID if k < class_count)
        if self.k_grid[-1] >= class_count:
            raise InvalidK(f"K={self.k_grid[-1]} must be below the class count {class_count}")
        return self.k_grid


def _require_nonempty(rs):
    if len(rs) == 0:
        raise EmptyRecordSet("record set is empty")


def fooling_rate(rs: RecordSet) -> float:
    _require_nonempty(rs)
    return int(np.count_nonzero(rs.post_labels != rs.pre_labels)) / len(rs)


def fr_at_k(rs: RecordSet, k: int) -> float:
    """Fraction of records whose pre-attack label fell out of the top ``k``."""
    if int(k) != k or not (1 <= k < rs.class_count):
        raise InvalidK(f"K must be an integer in [1, {rs.class_count - 1}], got {k}")
    _require_nonempty(rs)
    return int(np.count_nonzero(rs.ranks > k)) / len(rs)


def fr_curve(rs: RecordSet, cfg: MetricConfig = MetricConfig()) -> list[tuple[int, float]]:
    return [(k, fr_at_k(rs, k)) for k in cfg.grid_for(rs.class_count)]


def auc(curve: Sequence[tuple[int, float]]) -> float:
    """Trapezoidal area under an FR@K curve on a linear K axis, divided by
    the K span so the result stays in [0, 1].

    Evaluated in exact rational arithmetic, so a constant curve returns
    its constant bit-for-bit.
    """
    if len(curve) < 2:
        raise TooFewPoints("need at least two curve points")
    pts = [(Fraction(k), Fraction(float(v))) for k, v in curve]
    area = sum((k1 - k0) * (v0 + v1) / 2 for (k0, v0), (k1, v1) in zip(pts, pts[1:]))
    span = pts[-1][0] - pts[0][0]
    if span <= 0:
        raise TooFewPoints("curve K values must span a positive range")
    return float(area / span)


def _similarity(kind, context, a, b):
    if kind == SEMANTIC:
        if not isinstance(context, Taxonomy):
            raise TypeError("semantic similarity needs a Taxonomy")
        return wup_similarity(context, a, b)
    if kind == VISUAL:
        if not isinstance(context, VisualSimilarityMatrix):
            raise TypeError("visual similarity needs a VisualSimilarityMatrix")
        return context[a, b]
    raise ValueError(f"kind must be {SEMANTIC!r} or {VISUAL!r}, got {kind!r}")


def qi_wup(r: PredictionRecord, t: Taxonomy, ts: float = 0.7) -> int:
    return int(wup_similarity(t, r.pre_label, r.post_label) < ts)


def qi_vis(r: PredictionRecord, v: VisualSimilarityMatrix, tv: float = 0.1) -> int:
    return int(v[r.pre_label, r.post_label] < tv)


def qi(r: PredictionRecord, kind: str, context, threshold: float) -> int:
    return int(_similarity(kind, context, r.pre_label, r.post_label) < threshold)


def qi_targeted(r: PredictionRecord, kind: str, context, threshold: float) -> int:
    """Targeted variant: compares the post-attack label with the target."""
    if r.target_label is None:
        raise MissingTarget(f"record {r.record_id!r} has no target label")
    return int(_similarity(kind, context, r.target_label, r.post_label) < threshold)


def _pair_similarities(rs, kind, context, targeted=False):
    # one similarity per record; thresholds are applied by the callers
    out = np.empty(len(rs))
    for i, r in enumerate(rs.records):
        if targeted:
            if r.target_label is None:
                raise MissingTarget(f"record {r.record_id!r} has no target label")
            ref = r.target_label
        else:
            ref = r.pre_label
        out[i] = _similarity(kind, context, ref, r.post_label)
    return out


def mean_qi(rs: RecordSet, kind: str, context, threshold: float, targeted: bool = False) -> float:
    _require_nonempty(rs)
    sims = _pair_similarities(rs, kind, context, targeted)
    return int(np.count_nonzero(sims < threshold)) / len(rs)


def threshold_sweep(rs: RecordSet, kind: str, context, thresholds: Sequence[float],
                    targeted: bool = False) -> list[tuple[float, float]]:
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise EmptyThresholds("no thresholds given")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    _require_nonempty(rs)
    sims = _pair_similarities(rs, kind, context, targeted)
    n = len(rs)
    return [(t, int(np.count_nonzero(sims < t)) / n) for t in thresholds]
