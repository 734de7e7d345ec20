"""High-level scorer: a model archive plus an embedding backend plus an annotator."""

from __future__ import annotations

import threading
from collections.abc import Sequence

import numpy as np

from .embedding.providers import HIT_MODEL_ID, MINILM_MODEL_ID, EmbeddingProvider, resolve_provider
from .scorer.model import GranularityModel, load_model
from .textproc.aggregate import DEFAULT_SPEC, AggregationSpec
from .textproc.annotate import Annotator, default_annotator
from .textproc.scoring import ScoreReport, score_many, score_text


def provider_for(model: GranularityModel, embedding: str | None = None) -> EmbeddingProvider:
    """Backend for ``model``: the given spec, or the one named in the model."""
    if embedding is None:
        known = {HIT_MODEL_ID: "hit", MINILM_MODEL_ID: "minilm"}
        embedding = known.get(model.embedding_model_id)
        if embedding is None:
            raise ValueError(
                f"model was trained on {model.embedding_model_id!r}; pass an embedding backend explicitly"
            )
    provider = resolve_provider(embedding)
    model.check_provider(provider)
    return provider


class Granuscore:
    """Score single units or whole documents on the 0-100 granularity scale."""

    def __init__(self, model: GranularityModel, provider: EmbeddingProvider, annotator: Annotator | None = None):
        model.check_provider(provider)
        self.model = model
        self.provider = provider
        self.annotator = annotator or default_annotator()
        self._raw: dict[str, float] = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path, embedding: str | None = None, annotator: Annotator | None = None) -> "Granuscore":
        model = load_model(path)
        return cls(model, provider_for(model, embedding), annotator)

    def raw(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        with self._lock:
            todo = [t for t in dict.fromkeys(texts) if t not in self._raw]
        if todo:
            values = self.model.raw_scores(todo, self.provider)
            with self._lock:
                self._raw.update(zip(todo, values.tolist()))
        with self._lock:
            return np.array([self._raw[t] for t in texts], dtype=np.float64)

    def score_units(self, texts: Sequence[str]) -> np.ndarray:
        if not len(texts):
            return np.empty(0)
        return np.asarray(self.model.percentiles(self.raw(texts)), dtype=np.float64)

    def score(self, text: str) -> float:
        """Percentile Granuscore of a single referential unit, no decomposition."""
        return float(self.score_units([text])[0])

    def score_text(self, text: str, spec: AggregationSpec = DEFAULT_SPEC) -> ScoreReport:
        return score_text(text, self, spec, self.annotator)

    def score_many(self, texts: Sequence[str], spec: AggregationSpec = DEFAULT_SPEC, jobs: int = 1):
        return score_many(texts, self, spec, self.annotator, jobs)
