"""Neural-collapse geometry and Jensen-gap diagnostics."""

from src.collapse.diagnostics import (
    CollapseReport,
    GeneratedAlignment,
    beta_fit,
    class_means,
    collapse_report,
    covariances,
    etf_metrics,
    features_frame,
    make_generator,
    generated_alignment,
    row_cosines,
    weight_mean_alignment,
)
from src.collapse.jensen import JensenGapEstimate, jensen_gap_bound, jensen_prefactor, jensen_sweep

__all__ = [
    "CollapseReport",
    "GeneratedAlignment",
    "JensenGapEstimate",
    "beta_fit",
    "class_means",
    "collapse_report",
    "covariances",
    "etf_metrics",
    "features_frame",
    "jensen_gap_bound",
    "jensen_prefactor",
    "jensen_sweep",
    "make_generator",
    "generated_alignment",
    "row_cosines",
    "weight_mean_alignment",
]
