"""Score aggregation operators and two-step aggregation specs.

Spec names follow ``sent-<across>-pool-<within>`` (pool unit scores within
each sentence, then aggregate sentence scores) or ``doc-pool-<op>`` (pool
all unit scores of the document at once). Operators are ``mean``,
``weighted-mean``, ``sum``, ``min``, ``max`` and ``lqm-<q>``.
"""

from __future__ import annotations

import math
import re
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, EmptyInputError

OPERATORS = ("mean", "weighted_mean", "sum", "min", "max", "lqm")


def lqm(values: Sequence[float], q: float) -> float:
    """Lower-quantile mean: mean of the ``max(1, ceil(q*n))`` smallest values."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInputError("lqm of an empty list")
    if not 0 < q <= 1:
        raise ConfigurationError(f"lqm quantile must lie in (0, 1], got {q}")
    # guard ceil against representation error, e.g. 0.7 * 10 = 7.000000000000001
    m = max(1, math.ceil(round(q * v.size, 9)))
    return float(np.mean(np.sort(v)[:m]))


@dataclass(frozen=True)
class AggOp:
    name: str
    q: float | None = None

    def __post_init__(self):
        name = self.name.replace("-", "_")
        object.__setattr__(self, "name", name)
        if name not in OPERATORS:
            raise ConfigurationError(f"unknown aggregation operator {self.name!r}; choose from {OPERATORS}")
        if (name == "lqm") != (self.q is not None):
            raise ConfigurationError("a quantile q is required for lqm and only for lqm")
        if self.q is not None:
            q = float(self.q)
            if not 0 < q <= 1:
                raise ConfigurationError(f"lqm quantile must lie in (0, 1], got {q}")
            object.__setattr__(self, "q", q)

    @classmethod
    def parse(cls, text: str) -> "AggOp":
        text = text.strip().lower().replace("_", "-")
        m = re.fullmatch(r"lqm-?([0-9]*\.?[0-9]+)", text)
        if m:
            return cls("lqm", float(m.group(1)))
        return cls(text)

    @property
    def label(self) -> str:
        if self.name == "lqm":
            return f"lqm-{self.q:g}"
        return self.name.replace("_", "-")

    def __call__(self, scores: Sequence[float], weights: Sequence[float] | None = None) -> float:
        return aggregate(scores, self, weights)


def aggregate(scores: Sequence[float], op: AggOp | str, weights: Sequence[float] | None = None) -> float:
    """Apply one operator. ``weighted_mean`` needs ``weights`` (token counts)."""
    if isinstance(op, str):
        op = AggOp.parse(op)
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise EmptyInputError(f"cannot aggregate an empty list with {op.label}")
    if op.name == "mean":
        return float(np.mean(s))
    if op.name == "sum":
        return float(np.sum(s))
    if op.name == "min":
        return float(np.min(s))
    if op.name == "max":
        return float(np.max(s))
    if op.name == "lqm":
        return lqm(s, op.q)
    if weights is None:
        raise ConfigurationError("weighted_mean needs one weight per score")
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape != s.shape:
        raise ConfigurationError(f"{s.size} scores but {w.size} weights")
    if (w < 0).any() or w.sum() <= 0:
        raise ConfigurationError("weights must be non-negative with a positive total")
    return float(np.dot(s, w) / w.sum())


@dataclass(frozen=True)
class AggregationSpec:
    """How unit scores become a document score.

    ``across_sentences=None`` selects document scope: ``within_sentence``
    is then applied to all of the document's unit scores at once.
    """

    within_sentence: AggOp = AggOp("mean")
    across_sentences: AggOp | None = AggOp("lqm", 0.8)

    @property
    def scope(self) -> str:
        return "doc" if self.across_sentences is None else "sent"

    @property
    def name(self) -> str:
        if self.across_sentences is None:
            return f"doc-pool-{self.within_sentence.label}"
        return f"sent-{self.across_sentences.label}-pool-{self.within_sentence.label}"

    def __str__(self):
        return self.name

    @classmethod
    def parse(cls, name: str) -> "AggregationSpec":
        text = name.strip().lower().replace("_", "-")
        m = re.fullmatch(r"doc-pool-(.+)", text)
        if m:
            return cls(AggOp.parse(m.group(1)), None)
        m = re.fullmatch(r"sent-(.+?)-pool-(.+)", text)
        if not m:
            raise ConfigurationError(
                f"cannot parse aggregation {name!r}; expected 'sent-<op>-pool-<op>' or 'doc-pool-<op>'"
            )
        return cls(AggOp.parse(m.group(2)), AggOp.parse(m.group(1)))

    def to_dict(self) -> dict:
        def op(o):
            return None if o is None else {"op": o.name, "q": o.q}

        return {"name": self.name, "within_sentence": op(self.within_sentence),
                "across_sentences": op(self.across_sentences)}

    def apply(self, unit_scores: Sequence[Sequence[float]], unit_weights: Sequence[Sequence[float]] | None = None):
        """``(sentence scores, document score)`` for per-sentence unit scores.

        Sentences must be non-empty. For document scope the sentence scores
        are still computed (with the same operator) for reporting.
        """
        if unit_weights is None:
            unit_weights = [[1.0] * len(s) for s in unit_scores]
        if not unit_scores:
            raise EmptyInputError("no sentences to aggregate")
        sent = [aggregate(s, self.within_sentence, w) for s, w in zip(unit_scores, unit_weights)]
        if self.across_sentences is None:
            flat = [x for s in unit_scores for x in s]
            flat_w = [x for w in unit_weights for x in w]
            return sent, aggregate(flat, self.within_sentence, flat_w)
        sent_w = [float(sum(w)) for w in unit_weights]
        return sent, aggregate(sent, self.across_sentences, sent_w)


DEFAULT_SPEC = AggregationSpec()

_ACROSS = ["weighted-mean", "sum", "mean", "lqm-0.9", "lqm-0.8", "lqm-0.7", "min", "max"]
_POOL = ["sum", "mean", "lqm-0.1", "lqm-0.3", "lqm-0.5", "min", "max"]


def sweep_strategies() -> list[AggregationSpec]:
    """The 63 strategies of the aggregation ablation grid."""
    specs = [AggregationSpec.parse(f"sent-{a}-pool-{p}") for a in _ACROSS for p in _POOL]
    specs += [AggregationSpec.parse(f"doc-pool-{p}") for p in _POOL]
    return specs
