"""QA outcome stratification, granularity gap and dataset-level summaries."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..datasets import Outcome, QARecord
from ..errors import DegenerateTestError
from ..evalkit.stats import StatTestResult, mannwhitney_u

logger = logging.getLogger(__name__)

FIELDS = ("question", "gold_answer", "model_answer")


@dataclass
class ScoredRecord:
    record: QARecord
    question: float
    gold_answer: float
    model_answer: float

    @property
    def gap(self) -> float:
        return self.model_answer - self.gold_answer


def score_records(records: Sequence[QARecord], score_texts: Callable[[Sequence[str]], Sequence[float]]) -> list[ScoredRecord]:
    """Document Granuscores for the three text fields of every record.

    ``score_texts`` maps a list of documents to their Granuscores (for
    example ``lambda ts: [r.document_score for r in scorer.score_many(ts)]``).
    """
    out = {}
    for f in FIELDS:
        texts = [getattr(r, f) for r in records]
        out[f] = list(score_texts(texts))
    return [ScoredRecord(r, out["question"][i], out["gold_answer"][i], out["model_answer"][i])
            for i, r in enumerate(records)]


@dataclass
class OutcomeCell:
    mean: float  # mean over models of the per-model mean
    std: float  # standard deviation of per-model means
    pooled_mean: float
    n: int
    n_models: int


@dataclass
class OutcomeReport:
    cells: dict[tuple[str, str], OutcomeCell] = field(default_factory=dict)
    tests: dict[tuple[str, str, str], StatTestResult] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def outcomes(self) -> list[str]:
        present = {o for _, o in self.cells}
        return [o.value for o in Outcome if o.value in present]

    def to_rows(self) -> list[dict]:
        rows = []
        for (f, o), c in sorted(self.cells.items()):
            rows.append({"field": f, "outcome": o, "mean": c.mean, "std_across_models": c.std,
                         "pooled_mean": c.pooled_mean, "n": c.n, "n_models": c.n_models})
        return rows

    def to_dict(self) -> dict:
        return {
            "cells": self.to_rows(),
            "tests": [dict(field=f, a=a, b=b, **t.to_dict()) for (f, a, b), t in sorted(self.tests.items())],
            "warnings": self.warnings,
        }


def document_scores(scorer, spec=None, jobs: int = 1) -> Callable[[Sequence[str]], list[float]]:
    """Adapter from a :class:`~granuscore.api.Granuscore`-like object to ``score_texts``."""
    def fn(texts):
        kw = {"jobs": jobs} if spec is None else {"spec": spec, "jobs": jobs}
        return [r.document_score for r in scorer.score_many(list(texts), **kw)]

    return fn


def qa_outcome_report(records: Sequence[ScoredRecord] | Sequence[QARecord], scorer=None,
                      jobs: int = 1) -> OutcomeReport:
    """Mean Granuscore per (field, outcome) and Mann-Whitney tests between outcomes.

    ``records`` are either already scored, or raw QA records together with a
    ``scorer`` exposing ``score_many``.
    """
    scored = list(records)
    if scored and isinstance(scored[0], QARecord):
        if scorer is None:
            raise ValueError("unscored records need a scorer")
        scored = score_records(scored, document_scores(scorer, jobs=jobs))
    report = OutcomeReport()
    for f in FIELDS:
        groups: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
        for s in scored:
            groups[s.record.outcome.value][s.record.model_id].append(getattr(s, f))
        for o in Outcome:
            per_model = groups.get(o.value)
            if not per_model:
                report.warnings.append(f"no {o.value} records; {f} cell omitted")
                continue
            means = np.array([np.mean(v) for _, v in sorted(per_model.items())])
            pooled = [x for _, v in sorted(per_model.items()) for x in v]
            report.cells[(f, o.value)] = OutcomeCell(
                float(means.mean()), float(means.std(ddof=1)) if means.size > 1 else 0.0,
                float(np.mean(pooled)), len(pooled), int(means.size),
            )
        present = [o.value for o in Outcome if o.value in groups]
        for i, a in enumerate(present):
            for b in present[i + 1 :]:
                xa = [x for v in groups[a].values() for x in v]
                xb = [x for v in groups[b].values() for x in v]
                try:
                    report.tests[(f, a, b)] = mannwhitney_u(xa, xb)
                except DegenerateTestError as exc:
                    report.warnings.append(f"{f} {a} vs {b}: {exc}")
    for w in report.warnings:
        logger.warning(w)
    return report


def granularity_gap(scored: ScoredRecord | Sequence[ScoredRecord]):
    """Model-answer Granuscore minus gold-answer Granuscore."""
    if isinstance(scored, ScoredRecord):
        return scored.gap
    return np.array([s.gap for s in scored], dtype=np.float64)


@dataclass(frozen=True)
class AUCResult:
    mean: float
    std: float
    fold_aucs: tuple[float, ...]
    seed_used: int
    attempts: int


def gap_auc(gaps: Sequence[float], failed: Sequence[bool], folds: int = 5, seed: int = 0,
            max_attempts: int = 5) -> AUCResult:
    """Cross-validated AUC of a one-feature logistic regression (failure = positive).

    The model is an unpenalized logistic regression with intercept fitted to
    gradient tolerance 1e-8. Folds are stratified; if any test fold ends up
    with a single class the data are refolded with the next seed.
    """
    from sklearn.linear_model import LogisticRegression
    from sklearn.metrics import roc_auc_score
    from sklearn.model_selection import StratifiedKFold

    x = np.asarray(gaps, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(failed, dtype=bool).astype(int)
    if x.shape[0] != y.shape[0]:
        raise ValueError("one failure label per gap value is required")
    if len(np.unique(y)) < 2:
        raise DegenerateTestError("AUC needs both failures and successes")
    for attempt in range(max_attempts):
        s = seed + attempt
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=s)
        try:
            splits = list(splitter.split(x, y))
        except ValueError as exc:
            raise DegenerateTestError(f"cannot build {folds} stratified folds: {exc}") from exc
        if any(len(np.unique(y[te])) < 2 or len(np.unique(y[tr])) < 2 for tr, te in splits):
            logger.warning("single-class fold under seed %d; refolding", s)
            continue
        aucs = []
        for tr, te in splits:
            clf = LogisticRegression(penalty=None, tol=1e-8, max_iter=10_000, solver="lbfgs")
            clf.fit(x[tr], y[tr])
            aucs.append(float(roc_auc_score(y[te], clf.predict_proba(x[te])[:, 1])))
        a = np.array(aucs)
        return AUCResult(float(a.mean()), float(a.std()), tuple(aucs), s, attempt + 1)
    raise DegenerateTestError(f"every one of {max_attempts} fold assignments had a single-class fold")


# ----------------------------------------------------------------- scatter

SCATTER_COLUMNS = [
    "dataset", "model", "n", "correctness", "mean_question_granuscore", "mean_gold_granuscore",
    "mean_answer_granuscore", "question_length", "answer_length", "question_word_frequency",
    "answer_word_frequency", "question_tree_depth", "answer_tree_depth",
]


def dataset_scatter(
    scored: Sequence[ScoredRecord],
    word_frequency: Callable[[str], float] | None = None,
    tree_depth: Callable[[str], float] | None = None,
) -> list[dict]:
    """One row per (dataset, model) with mean Granuscores plus correctness and its confounds.

    Length columns are whitespace token counts of the question and gold
    answer. Word-frequency and tree-depth columns stay empty unless the
    corresponding callables are supplied.
    """
    groups: dict[tuple[str, str], list[ScoredRecord]] = defaultdict(list)
    for s in scored:
        groups[(s.record.dataset_id, s.record.model_id)].append(s)
    rows = []
    for (ds, model), items in sorted(groups.items()):
        q = [s.record.question for s in items]
        a = [s.record.gold_answer for s in items]
        row = {
            "dataset": ds,
            "model": model,
            "n": len(items),
            "correctness": float(np.mean([s.record.outcome is Outcome.CORRECT for s in items])),
            "mean_question_granuscore": float(np.mean([s.question for s in items])),
            "mean_gold_granuscore": float(np.mean([s.gold_answer for s in items])),
            "mean_answer_granuscore": float(np.mean([s.model_answer for s in items])),
            "question_length": float(np.mean([len(t.split()) for t in q])),
            "answer_length": float(np.mean([len(t.split()) for t in a])),
            "question_word_frequency": "",
            "answer_word_frequency": "",
            "question_tree_depth": "",
            "answer_tree_depth": "",
        }
        if word_frequency is not None:
            row["question_word_frequency"] = float(np.mean([word_frequency(t) for t in q]))
            row["answer_word_frequency"] = float(np.mean([word_frequency(t) for t in a]))
        if tree_depth is not None:
            row["question_tree_depth"] = float(np.mean([tree_depth(t) for t in q]))
            row["answer_tree_depth"] = float(np.mean([tree_depth(t) for t in a]))
        rows.append(row)
    return rows


def write_csv(rows: Sequence[dict], path, columns: Sequence[str] | None = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def plot_scatter(rows: Sequence[dict], path, x: str = "mean_gold_granuscore") -> None:
    """Static scatter of correctness against a Granuscore column, one series per model."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for model in sorted({r["model"] for r in rows}):
        pts = sorted((r[x], r["correctness"], r["dataset"]) for r in rows if r["model"] == model)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=model)
    ax.set_xlabel(x.replace("_", " "))
    ax.set_ylabel("correctness")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
