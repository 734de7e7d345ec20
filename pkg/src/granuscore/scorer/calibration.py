"""Percentile calibration against a fixed reference distribution of raw scores."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence

import numpy as np

from ..errors import BackendError, CalibrationError

logger = logging.getLogger(__name__)

RANK_METHODS = ("mid", "strict", "weak")


class CalibrationTable:
    """Sorted raw scores of a reference corpus."""

    def __init__(self, scores, corpus_id: str = ""):
        s = np.asarray(scores, dtype=np.float64).ravel()
        if s.size < 2:
            raise CalibrationError("a calibration table needs at least two scores")
        if not np.isfinite(s).all():
            raise CalibrationError("calibration scores must be finite")
        if (np.diff(s) < 0).any():
            raise CalibrationError("calibration scores must be sorted ascending")
        s = s.copy()
        s.setflags(write=False)
        self.scores = s
        self.corpus_id = corpus_id

    def __len__(self):
        return self.scores.size

    @classmethod
    def from_unsorted(cls, scores, corpus_id: str = "") -> "CalibrationTable":
        return cls(np.sort(np.asarray(scores, dtype=np.float64), kind="stable"), corpus_id)

    def percentile(self, raw, method: str = "mid"):
        return to_percentile(raw, self, method)


def to_percentile(raw, table: CalibrationTable, method: str = "mid"):
    """Percentile rank of ``raw`` within ``table``.

    ``mid`` (default) counts ties as half: ``100 * (#below + #equal/2) / n``.
    ``strict`` counts only values below and ``weak`` values at or below.
    Scalars in give a float out; arrays give arrays.
    """
    if method not in RANK_METHODS:
        raise ValueError(f"method must be one of {RANK_METHODS}, got {method!r}")
    r = np.asarray(raw, dtype=np.float64)
    below = np.searchsorted(table.scores, r, side="left")
    if method == "strict":
        count = below.astype(np.float64)
    else:
        at_or_below = np.searchsorted(table.scores, r, side="right")
        count = at_or_below.astype(np.float64) if method == "weak" else 0.5 * (below + at_or_below)
    out = 100.0 * count / table.scores.size
    return float(out) if out.ndim == 0 else out


def build_calibration(
    raw_score: Callable[[Sequence[str]], np.ndarray],
    corpus: Sequence[str],
    corpus_id: str = "",
    batch_size: int = 2048,
    max_skip_fraction: float = 0.01,
) -> tuple[CalibrationTable, dict]:
    """Raw-score every corpus item and sort the results.

    ``raw_score`` maps a batch of strings to raw predictions (the full
    embed, featurize, predict path). When a batch fails with a backend
    error it is retried item by item and the failing items are skipped.
    Returns the table and a coverage report.
    """
    corpus = list(corpus)
    if not corpus:
        raise CalibrationError("calibration corpus is empty")
    scored: list[np.ndarray] = []
    skipped: list[str] = []
    for s in range(0, len(corpus), batch_size):
        batch = corpus[s : s + batch_size]
        try:
            scored.append(np.asarray(raw_score(batch), dtype=np.float64))
            continue
        except BackendError as exc:
            logger.warning("calibration batch at %d failed (%s); retrying item by item", s, exc)
        for item in batch:
            try:
                scored.append(np.asarray(raw_score([item]), dtype=np.float64))
            except BackendError as exc:
                logger.warning("skipping calibration item %r: %s", item, exc)
                skipped.append(item)
    report = {
        "corpus_size": len(corpus),
        "scored": len(corpus) - len(skipped),
        "skipped": len(skipped),
        "coverage": (len(corpus) - len(skipped)) / len(corpus),
        "skipped_examples": skipped[:20],
    }
    logger.info("calibration coverage %.4f (%d skipped)", report["coverage"], len(skipped))
    if len(skipped) > max_skip_fraction * len(corpus):
        raise CalibrationError(
            f"{len(skipped)} of {len(corpus)} calibration items failed "
            f"(limit {max_skip_fraction:.0%}); first: {skipped[:5]}"
        )
    return CalibrationTable.from_unsorted(np.concatenate(scored), corpus_id), report
