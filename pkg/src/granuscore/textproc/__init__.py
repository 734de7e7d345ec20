"""Referential-unit extraction and multi-word aggregation."""

from .aggregate import DEFAULT_SPEC, AggOp, AggregationSpec, aggregate, lqm, sweep_strategies
from .annotate import Annotator, LexiconAnnotator, SpacyAnnotator, default_annotator, resolve_annotator
from .scoring import FALLBACK_SCORE, ScoreReport, report_from_units, score_many, score_text
from .units import ReferentialUnit, extract_units, units_by_sentence

__all__ = [
    "DEFAULT_SPEC",
    "FALLBACK_SCORE",
    "AggOp",
    "AggregationSpec",
    "Annotator",
    "LexiconAnnotator",
    "ReferentialUnit",
    "ScoreReport",
    "SpacyAnnotator",
    "aggregate",
    "default_annotator",
    "extract_units",
    "lqm",
    "report_from_units",
    "resolve_annotator",
    "score_many",
    "score_text",
    "sweep_strategies",
    "units_by_sentence",
]
