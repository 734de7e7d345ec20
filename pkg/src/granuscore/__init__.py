"""Granuscore: reference-free granularity scores from hierarchical embeddings.

Lower scores mean finer (more specific) expressions. Scores are
percentiles against a reference vocabulary, so they live on a 0-100 scale.
"""

__version__ = "0.1.0"

from .api import Granuscore, provider_for
from .scorer import GranularityModel, load_model, save_model
from .textproc import DEFAULT_SPEC, AggregationSpec, ScoreReport, score_text

__all__ = [
    "DEFAULT_SPEC",
    "AggregationSpec",
    "GranularityModel",
    "Granuscore",
    "ScoreReport",
    "__version__",
    "load_model",
    "provider_for",
    "save_model",
    "score_text",
]
