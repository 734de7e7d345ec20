"""Multi-word scoring: units, sentence scores and the document Granuscore."""

from __future__ import annotations

import json
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .aggregate import DEFAULT_SPEC, AggregationSpec
from .annotate import Annotator, default_annotator
from .units import ReferentialUnit, units_by_sentence

FALLBACK_SCORE = 100.0


class UnitScorer(Protocol):
    def score_units(self, texts: Sequence[str]) -> np.ndarray:
        """Percentile Granuscores (0-100) for unit strings."""


@dataclass
class ScoreReport:
    units: list[list[ReferentialUnit]]
    sentence_scores: list[float]
    document_score: float
    spec: AggregationSpec = DEFAULT_SPEC
    fallback_used: bool = False
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "document_score": self.document_score,
            "fallback_used": self.fallback_used,
            "spec": self.spec.to_dict(),
            "sentence_scores": self.sentence_scores,
            "units": [[dict(u.to_dict(), sentence=i) for u in sent] for i, sent in enumerate(self.units)],
            **({"meta": self.meta} if self.meta else {}),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, **kw)


def report_from_units(units: list[list[ReferentialUnit]], spec: AggregationSpec = DEFAULT_SPEC) -> ScoreReport:
    """Aggregate already-scored units."""
    if not units:
        return ScoreReport([], [], FALLBACK_SCORE, spec, True)
    scores = [[u.score for u in sent] for sent in units]
    weights = [[u.n_tokens for u in sent] for sent in units]
    sent, doc = spec.apply(scores, weights)
    return ScoreReport(units, sent, float(doc), spec, False)


def score_units_of(groups: list[list[ReferentialUnit]], scorer: UnitScorer) -> list[list[ReferentialUnit]]:
    flat = [u.text for sent in groups for u in sent]
    if not flat:
        return []
    unique = list(dict.fromkeys(flat))
    values = dict(zip(unique, np.asarray(scorer.score_units(unique), dtype=np.float64).tolist()))
    return [[u.with_score(values[u.text]) for u in sent] for sent in groups]


def score_text(
    text: str,
    scorer: UnitScorer,
    spec: AggregationSpec = DEFAULT_SPEC,
    annotator: Annotator | None = None,
) -> ScoreReport:
    """Document Granuscore of ``text``.

    Text without any referential unit gets the coarsest score, 100.
    """
    groups = units_by_sentence(text, annotator or default_annotator())
    return report_from_units(score_units_of(groups, scorer), spec)


def score_many(
    texts: Sequence[str],
    scorer: UnitScorer,
    spec: AggregationSpec = DEFAULT_SPEC,
    annotator: Annotator | None = None,
    jobs: int = 1,
) -> list[ScoreReport]:
    """Score several documents, embedding all of their units in one pass."""
    annotator = annotator or default_annotator()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            grouped = list(pool.map(lambda t: units_by_sentence(t, annotator), texts))
    else:
        grouped = [units_by_sentence(t, annotator) for t in texts]
    unique = list(dict.fromkeys(u.text for g in grouped for sent in g for u in sent))
    values = {}
    if unique:
        values = dict(zip(unique, np.asarray(scorer.score_units(unique), dtype=np.float64).tolist()))
    out = []
    for g in grouped:
        scored = [[u.with_score(values[u.text]) for u in sent] for sent in g]
        out.append(report_from_units(scored, spec))
    return out
