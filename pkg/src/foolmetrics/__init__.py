"""Adversarial attack evaluation beyond fooling rate."""

__version__ = "0.1.0"

from .metrics import (
    MetricConfig,
    PredictionRecord,
    RecordSet,
    auc,
    fooling_rate,
    fr_at_k,
    fr_curve,
    mean_qi,
    qi_targeted,
    qi_vis,
    qi_wup,
    threshold_sweep,
)
from .taxonomy import (
    Taxonomy,
    depth,
    load_taxonomy,
    lowest_common_subsumer,
    pairwise_wup_matrix,
    read_taxonomy,
    wup_similarity,
)
from .visual_sim import (
    VisualSimilarityMatrix,
    WeightTemplates,
    knee_threshold,
    load_templates,
    pairwise_vis_matrix,
    percentile_curve,
    vis_similarity,
)
