"""End-to-end workflows from GRANOLA features to a calibrated, evaluated model."""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Callable, Sequence

import numpy as np

from .anchors import AnchorIndex, FeatureConfig, Featurizer
from .datasets import GranolaEntry, load_calibration_corpus
from .embedding.geometry import dist0_array
from .embedding.providers import EmbeddingProvider
from .evalkit.baselines import TaxonomyDepth, word_count_score
from .evalkit.metrics import ranking_report
from .evalkit.report import EvaluationTable
from .scorer.calibration import build_calibration
from .scorer.ensemble import RegressorConfig, TrainingResult, train_regressor
from .scorer.model import GranularityModel, default_training_date

logger = logging.getLogger(__name__)


def flatten(entries: Sequence[GranolaEntry]) -> tuple[list[str], np.ndarray]:
    texts = [r.text for e in entries for r in e.realizations]
    levels = np.array([r.level for e in entries for r in e.realizations], dtype=np.float64)
    return texts, levels


def embed_unique(provider: EmbeddingProvider, texts: Sequence[str], batch_size: int = 1024) -> np.ndarray:
    """Embeddings for ``texts`` (duplicates embedded once), in input order."""
    uniq = list(dict.fromkeys(texts))
    pos = {t: i for i, t in enumerate(uniq)}
    parts = [provider.embed_array(uniq[s : s + batch_size]) for s in range(0, len(uniq), batch_size)]
    table = np.concatenate(parts) if parts else np.zeros((0, provider.space.dimension))
    return table[[pos[t] for t in texts]]


def feature_matrix(featurizer: Featurizer, provider: EmbeddingProvider, texts: Sequence[str],
                   ordinal_base: int = 0) -> np.ndarray:
    emb = embed_unique(provider, texts)
    return featurizer.transform(emb, range(ordinal_base, ordinal_base + len(texts)))


def train_granuscore(
    train: Sequence[GranolaEntry],
    dev: Sequence[GranolaEntry],
    provider: EmbeddingProvider,
    index: AnchorIndex | None,
    features: FeatureConfig | None = None,
    regressor: RegressorConfig | None = None,
    metadata: dict | None = None,
) -> tuple[GranularityModel, TrainingResult]:
    """Fit the regressor on realization-level rows (target = normalized level)."""
    features = features or FeatureConfig()
    regressor = regressor or RegressorConfig()
    featurizer = Featurizer(features, index, provider.space)
    tr_texts, tr_y = flatten(train)
    dv_texts, dv_y = flatten(dev)
    X = feature_matrix(featurizer, provider, tr_texts)
    Xd = feature_matrix(featurizer, provider, dv_texts, ordinal_base=len(tr_texts))
    result = train_regressor((X, tr_y), (Xd, dv_y), regressor)
    meta = {
        "training_date": default_training_date(),
        "train_rows": len(tr_texts),
        "dev_rows": len(dv_texts),
        "best_iteration": result.best_iteration,
        "dev_rmse": result.dev_rmse,
        "feature_names_head": featurizer.feature_names[:3],
    }
    meta.update(metadata or {})
    model = GranularityModel(result.ensemble, featurizer, provider.model_id, regressor, None, meta)
    return model, result


def calibrate(model: GranularityModel, provider: EmbeddingProvider, corpus: Sequence[str] | None = None,
              corpus_id: str | None = None) -> tuple[GranularityModel, dict]:
    """Attach a calibration table built from ``corpus`` (WordNet nouns by default)."""
    if corpus is None:
        corpus = load_calibration_corpus()
        corpus_id = corpus_id or "wordnet-3.0-nouns"
    table, report = build_calibration(lambda b: model.raw_scores(b, provider), corpus, corpus_id or "custom")
    return model.with_calibration(table), report


# ---------------------------------------------------------------- evaluation


Scorer = Callable[[Sequence[str]], "tuple[np.ndarray, np.ndarray] | np.ndarray"]


def dist0_scorer(provider: EmbeddingProvider, radial: str = "hyperbolic") -> Scorer:
    """Training-free baseline: negated distance from the origin.

    Deeper points are finer, so the sign is flipped to keep the convention
    that higher scores are coarser.
    """
    def score(texts):
        emb = embed_unique(provider, texts).astype(np.float64)
        if provider.space.is_hyperbolic and radial == "hyperbolic":
            return -dist0_array(emb, provider.space.curvature)
        return -np.linalg.norm(emb, axis=1)

    return score


def word_count_scorer() -> Scorer:
    return lambda texts: np.array([word_count_score(t) for t in texts])


def taxonomy_scorer(taxonomy: TaxonomyDepth | None = None) -> Scorer:
    """Negated WordNet depth (so that higher = coarser) plus a coverage mask."""
    taxonomy = taxonomy or TaxonomyDepth()

    def score(texts):
        vals, cov = [], []
        for t in texts:
            d, ok = taxonomy(t)
            vals.append(-d if ok else np.nan)
            cov.append(ok)
        return np.array(vals), np.array(cov, dtype=bool)

    return score


def model_scorer(model: GranularityModel, provider: EmbeddingProvider) -> Scorer:
    return lambda texts: model.raw_scores(texts, provider)


def scored_entries(entries: Sequence[GranolaEntry], scorer: Scorer):
    """``([(gold, pred), ...], coverage)``; uncovered realizations are dropped."""
    texts, _ = flatten(entries)
    out = scorer(texts)
    if isinstance(out, tuple):
        preds, covered = out
    else:
        preds, covered = out, np.ones(len(texts), dtype=bool)
    preds = np.asarray(preds, dtype=np.float64)
    result, k = [], 0
    for e in entries:
        n = len(e.realizations)
        mask = covered[k : k + n]
        if mask.any():
            g = np.array(e.levels)[mask]
            result.append((g, preds[k : k + n][mask]))
        k += n
    coverage = float(covered.mean()) if len(covered) else 0.0
    return result, coverage


def evaluate_methods(entries: Sequence[GranolaEntry], methods: dict[str, Scorer], header: dict | None = None) -> EvaluationTable:
    table = EvaluationTable(header=dict(header or {}))
    for name, scorer in methods.items():
        scored, coverage = scored_entries(entries, scorer)
        table.add(name, ranking_report(scored), coverage)
        logger.info("%s: %s", name, table.rows[-1])
    return table


def level_means(entries: Sequence[GranolaEntry], raw: np.ndarray, model: GranularityModel | None = None) -> dict:
    """Mean raw (and percentile, when calibrated) score per normalized level."""
    _, levels = flatten(entries)
    raw = np.asarray(raw, dtype=np.float64)
    pct = None
    if model is not None and model.calibration is not None:
        pct = np.asarray(model.percentiles(raw), dtype=np.float64)
    groups = defaultdict(list)
    for i, lv in enumerate(levels):
        groups[round(float(lv), 6)].append(i)
    out = {}
    for lv in sorted(groups):
        idx = np.array(groups[lv])
        row = {"n": int(idx.size), "raw": float(raw[idx].mean())}
        if pct is not None:
            row["percentile"] = float(pct[idx].mean())
        out[lv] = row
    return out
