"""Ranking metrics, significance tests and baselines."""

from .baselines import TaxonomyDepth, baseline_score, word_count_score
from .metrics import (
    PairCount,
    RankingReport,
    exact_ordering_accuracy,
    kendall_tau_b,
    pairwise_accuracy,
    pairwise_counts,
    pearson_r,
    rank_correlations,
    ranking_report,
)
from .report import EvaluationTable
from .stats import (
    StatTestResult,
    bootstrap_diff_test,
    cohens_dz,
    mannwhitney_u,
    paired_t_test,
    paired_tests,
    wilcoxon_signed_rank,
)

__all__ = [
    "EvaluationTable",
    "PairCount",
    "RankingReport",
    "StatTestResult",
    "TaxonomyDepth",
    "baseline_score",
    "bootstrap_diff_test",
    "cohens_dz",
    "exact_ordering_accuracy",
    "kendall_tau_b",
    "mannwhitney_u",
    "paired_t_test",
    "paired_tests",
    "pairwise_accuracy",
    "pairwise_counts",
    "pearson_r",
    "rank_correlations",
    "ranking_report",
    "wilcoxon_signed_rank",
    "word_count_score",
]
