"""Downstream studies: QA outcomes, section comparison and the aggregation sweep."""

from .judge import JudgeClient, JudgeConfig, Verdict, load_prompt, parse_verdict
from .qa import (
    AUCResult,
    OutcomeReport,
    ScoredRecord,
    dataset_scatter,
    gap_auc,
    granularity_gap,
    qa_outcome_report,
    score_records,
)
from .sections import (
    Paper,
    SectionComparison,
    SectionPair,
    aggregation_sweep,
    clean_paragraph,
    load_paper_corpus,
    section_compare,
    select_pair,
    select_pairs,
)

__all__ = [
    "AUCResult",
    "JudgeClient",
    "JudgeConfig",
    "OutcomeReport",
    "Paper",
    "ScoredRecord",
    "SectionComparison",
    "SectionPair",
    "Verdict",
    "aggregation_sweep",
    "clean_paragraph",
    "dataset_scatter",
    "gap_auc",
    "granularity_gap",
    "load_paper_corpus",
    "load_prompt",
    "parse_verdict",
    "qa_outcome_report",
    "score_records",
    "section_compare",
    "select_pair",
    "select_pairs",
]
