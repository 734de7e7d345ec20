"""Ranking metrics over answer hierarchies.

An *entry* is a pair ``(gold, pred)`` of equal-length sequences: gold
granularity levels and predicted scores for the realizations of one answer
hierarchy. Higher means coarser for both.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from ..errors import UndefinedMetricError

logger = logging.getLogger(__name__)

Entry = tuple[Sequence[float], Sequence[float]]


@dataclass(frozen=True)
class PairCount:
    correct: int
    eligible: int

    @property
    def accuracy(self) -> float:
        if self.eligible == 0:
            raise UndefinedMetricError("no realization pairs with distinct gold levels")
        return 100.0 * self.correct / self.eligible

    def __add__(self, other: "PairCount") -> "PairCount":
        return PairCount(self.correct + other.correct, self.eligible + other.eligible)


def _as_arrays(entries: Sequence[Entry]):
    golds, preds = [], []
    for g, p in entries:
        g = np.asarray(g, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        if g.shape != p.shape or g.ndim != 1:
            raise ValueError("each entry needs gold and predicted values of equal length")
        golds.append(g)
        preds.append(p)
    return golds, preds


def _count_pairs(g: np.ndarray, p: np.ndarray, chunk: int = 2048) -> PairCount:
    """Ordered pairs with g_i < g_j, and how many of them have p_i < p_j."""
    correct = eligible = 0
    for s in range(0, len(g), chunk):
        gi = g[s : s + chunk, None]
        pi = p[s : s + chunk, None]
        lower = gi < g[None, :]
        eligible += int(lower.sum())
        correct += int((lower & (pi < p[None, :])).sum())
    return PairCount(correct, eligible)


def pairwise_counts(entries: Sequence[Entry], scope: str = "global") -> PairCount:
    """Pair counts behind :func:`pairwise_accuracy`."""
    golds, preds = _as_arrays(entries)
    if scope == "global":
        if not golds:
            return PairCount(0, 0)
        return _count_pairs(np.concatenate(golds), np.concatenate(preds))
    if scope == "intra":
        total = PairCount(0, 0)
        for g, p in zip(golds, preds):
            total = total + _count_pairs(g, p)
        return total
    raise ValueError(f"scope must be 'global' or 'intra', got {scope!r}")


def pairwise_accuracy(entries: Sequence[Entry], scope: str = "global") -> float:
    """Percent of distinct-gold pairs whose predictions are strictly in gold order.

    ``global`` pools realizations of all entries; ``intra`` only compares
    realizations of the same entry. Tied predictions count as wrong.
    """
    return pairwise_counts(entries, scope).accuracy


def exact_ordering_counts(entries: Sequence[Entry]) -> PairCount:
    golds, preds = _as_arrays(entries)
    ok = 0
    for g, p in zip(golds, preds):
        if len(p) and len(np.unique(p)) == len(p):
            order = np.argsort(p, kind="stable")
            # gold sorted by prediction must be strictly increasing
            gs = g[order]
            ok += bool(np.all(gs[1:] > gs[:-1]))
    return PairCount(ok, len(golds))


def exact_ordering_accuracy(entries: Sequence[Entry]) -> float:
    """Percent of entries whose predictions reproduce the gold order with no ties."""
    c = exact_ordering_counts(entries)
    return 0.0 if c.eligible == 0 else c.accuracy


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise UndefinedMetricError("Kendall's tau needs at least two points")
    tau = stats.kendalltau(x, y, variant="b").statistic
    if not np.isfinite(tau):
        raise UndefinedMetricError("Kendall's tau is undefined when one variable is constant")
    return float(tau)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise UndefinedMetricError("Pearson's r needs at least two points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedMetricError("Pearson's r is undefined for a zero-variance variable")
    return float(stats.pearsonr(x, y).statistic)


def rank_correlations(entries: Sequence[Entry]) -> tuple[float, float, float]:
    """``(kendall_tau, pearson_r, intra_kendall_tau)``, all times 100.

    The intra variant averages per-entry tau-b over entries with at least
    two distinct gold levels; an entry with constant predictions adds 0.
    """
    golds, preds = _as_arrays(entries)
    g = np.concatenate(golds) if golds else np.empty(0)
    p = np.concatenate(preds) if preds else np.empty(0)
    tau = kendall_tau_b(g, p)
    r = pearson_r(g, p)
    return 100.0 * tau, 100.0 * r, _intra_tau(golds, preds)


@dataclass(frozen=True)
class RankingReport:
    global_pw_acc: float
    intra_pw_acc: float
    exact_ordering_acc: float
    kendall_tau: float
    pearson_r: float
    intra_kendall_tau: float
    global_pairs: int
    intra_pairs: int
    entries: int
    realizations: int

    def to_dict(self) -> dict:
        return asdict(self)


def _or_nan(fn, *args) -> float:
    try:
        return fn(*args)
    except UndefinedMetricError as exc:
        logger.warning("%s; reporting NaN", exc)
        return float("nan")


def _intra_tau(golds, preds) -> float:
    per = []
    for ge, pe in zip(golds, preds):
        if len(np.unique(ge)) < 2:
            continue
        per.append(0.0 if np.ptp(pe) == 0 else kendall_tau_b(ge, pe))
    if not per:
        raise UndefinedMetricError("no entry has two distinct gold levels")
    return 100.0 * float(np.mean(per))


def ranking_report(entries: Sequence[Entry]) -> RankingReport:
    """All ranking metrics of one method.

    Metrics that are undefined on the given data (for example a correlation
    with constant predictions) are reported as NaN with a warning.
    """
    g = pairwise_counts(entries, "global")
    i = pairwise_counts(entries, "intra")
    golds, preds = _as_arrays(entries)
    gg = np.concatenate(golds) if golds else np.empty(0)
    pp = np.concatenate(preds) if preds else np.empty(0)
    tau = 100.0 * _or_nan(kendall_tau_b, gg, pp)
    r = 100.0 * _or_nan(pearson_r, gg, pp)
    itau = _or_nan(_intra_tau, golds, preds)
    return RankingReport(
        global_pw_acc=_or_nan(lambda: g.accuracy),
        intra_pw_acc=_or_nan(lambda: i.accuracy),
        exact_ordering_acc=exact_ordering_accuracy(entries),
        kendall_tau=tau,
        pearson_r=r,
        intra_kendall_tau=itau,
        global_pairs=g.eligible,
        intra_pairs=i.eligible,
        entries=len(entries),
        realizations=sum(len(e[0]) for e in entries),
    )


def pair_dump(entries: Sequence[Entry]) -> list[dict]:
    """Every intra-entry eligible pair with its verdict (for verbose reports)."""
    rows = []
    for ei, (g, p) in enumerate(entries):
        for a in range(len(g)):
            for b in range(len(g)):
                if g[a] < g[b]:
                    rows.append({"entry": ei, "fine": a, "coarse": b, "gold_fine": float(g[a]),
                                 "gold_coarse": float(g[b]), "pred_fine": float(p[a]),
                                 "pred_coarse": float(p[b]), "correct": bool(p[a] < p[b])})
    return rows
