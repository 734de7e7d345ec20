"""Introduction vs Related Work granularity comparison and the aggregation sweep."""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, DegenerateTestError
from ..evalkit.stats import paired_tests
from ..textproc.aggregate import DEFAULT_SPEC, AggregationSpec
from ..textproc.annotate import Annotator, default_annotator
from ..textproc.scoring import UnitScorer, report_from_units
from ..textproc.units import ReferentialUnit, units_by_sentence

logger = logging.getLogger(__name__)

MIN_UNITS = 10
MIN_PAPERS = 30

# ------------------------------------------------------------------ cleaning

_URL = re.compile(r"(?:https?://|ftp://|www\.)\S+|\b[\w.+-]+@[\w-]+\.[\w.]+\b", re.I)
_BRACKETS = [re.compile(r"\[[^\[\]]*\]"), re.compile(r"\([^()]*\)"), re.compile(r"\{[^{}]*\}")]
_CAPTION = re.compile(r"^\s*(?:fig(?:ure)?\.?|table|tab\.)\s*[0-9IVXivx]+[a-z]?\s*[:.|-]", re.I)
_PAGE_LINE = re.compile(r"^\s*(?:page\s+)?\d{1,4}(?:\s*(?:/|of)\s*\d{1,4})?\s*$", re.I)
_HYPHEN_BREAK = re.compile(r"(\w)-\s*\n\s*(\w)")
_LIGATURES = {"\ufb00": "ff", "\ufb01": "fi", "\ufb02": "fl", "\ufb03": "ffi", "\ufb04": "ffl",
              "\ufb05": "st", "\ufb06": "st"}
_ZERO_WIDTH = re.compile("[\u00ad\u200b\u200c\u200d\ufeff]")
_SPACE_BEFORE_PUNCT = re.compile(r"\s+([,.;:!?])")


def is_caption(paragraph: str) -> bool:
    return bool(_CAPTION.match(paragraph))


def clean_paragraph(text: str) -> str:
    """Strip bracketed material, URLs and extraction artifacts from a paragraph.

    Returns an empty string for figure/table captions. Nested brackets are
    removed from the inside out. Words hyphenated across a line break are
    rejoined, ligature characters are expanded, soft hyphens and zero-width
    characters are dropped, and lines holding only a page number vanish.
    """
    if not text or is_caption(text):
        return ""
    for a, b in _LIGATURES.items():
        text = text.replace(a, b)
    text = unicodedata.normalize("NFKC", text)
    text = _ZERO_WIDTH.sub("", text)
    text = "\n".join(line for line in text.splitlines() if not _PAGE_LINE.match(line))
    text = _HYPHEN_BREAK.sub(r"\1\2", text)
    text = _URL.sub(" ", text)
    for _ in range(8):
        before = text
        for pat in _BRACKETS:
            text = pat.sub(" ", text)
        if text == before:
            break
    text = re.sub(r"\s+", " ", text).strip()
    text = _SPACE_BEFORE_PUNCT.sub(r"\1", text)
    return text


# ------------------------------------------------------------------- corpus


@dataclass
class Paper:
    paper_id: str
    introduction: list[str] = field(default_factory=list)
    related_work: list[str] = field(default_factory=list)


def section_kind(name: str) -> str | None:
    n = re.sub(r"[^a-z ]+", " ", name.casefold())
    n = re.sub(r"\s+", " ", n).strip()
    if "introduction" in n:
        return "introduction"
    if "related work" in n or "related works" in n:
        return "related_work"
    return None


def load_paper_corpus(source: str | Path | Iterable[dict]) -> list[Paper]:
    """Papers from line-delimited ``{paper_id, section, paragraphs}`` records.

    Several records of the same section kind are concatenated in file order.
    Sections other than Introduction and Related Work are ignored. Papers
    keep their first-seen order.
    """
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
        records = []
        for i, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{source}: line {i} is not JSON ({exc.msg})") from exc
    else:
        records = list(source)
    papers: dict[str, Paper] = {}
    for i, rec in enumerate(records, 1):
        try:
            pid = str(rec["paper_id"])
            section = str(rec["section"])
            paragraphs = rec["paragraphs"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"record {i} lacks paper_id/section/paragraphs") from exc
        if isinstance(paragraphs, str):
            paragraphs = [p for p in re.split(r"\n\s*\n", paragraphs)]
        kind = section_kind(section)
        if kind is None:
            continue
        paper = papers.setdefault(pid, Paper(pid))
        getattr(paper, kind).extend(str(p) for p in paragraphs)
    return list(papers.values())


# ---------------------------------------------------------------- selection

@dataclass
class SectionPair:
    paper_id: str
    intro_text: str
    related_text: str
    intro_units: list[list[ReferentialUnit]]
    related_units: list[list[ReferentialUnit]]
    intro_score: float = float("nan")
    related_score: float = float("nan")


def _n_units(groups) -> int:
    return sum(len(s) for s in groups)


def _prepare(paragraphs: Sequence[str], annotator: Annotator):
    for raw in paragraphs:
        text = clean_paragraph(raw)
        if not text:
            yield text, []
            continue
        yield text, units_by_sentence(text, annotator)


def select_pair(paper: Paper, annotator: Annotator, min_units: int = MIN_UNITS) -> SectionPair | None:
    """Pick the comparison paragraphs of one paper, or None if either is missing.

    Introduction: the first paragraph with at least ``min_units``
    referential units. Related Work: the first such paragraph after the
    opening one, falling back to the opening paragraph when it qualifies.
    Captions and paragraphs that clean to nothing still count as positions.
    """
    intro = next(((t, u) for t, u in _prepare(paper.introduction, annotator) if _n_units(u) >= min_units), None)
    if intro is None:
        return None
    rel = list(_prepare(paper.related_work, annotator))
    chosen = next(((t, u) for t, u in rel[1:] if _n_units(u) >= min_units), None)
    if chosen is None and rel and _n_units(rel[0][1]) >= min_units:
        chosen = rel[0]
    if chosen is None:
        return None
    return SectionPair(paper.paper_id, intro[0], chosen[0], intro[1], chosen[1])


def select_pairs(papers: Sequence[Paper], annotator: Annotator | None = None, min_units: int = MIN_UNITS,
                 jobs: int = 1) -> list[SectionPair]:
    annotator = annotator or default_annotator()
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            picked = list(pool.map(lambda p: select_pair(p, annotator, min_units), papers))
    else:
        picked = [select_pair(p, annotator, min_units) for p in papers]
    dropped = sum(p is None for p in picked)
    if dropped:
        logger.info("dropped %d of %d papers without qualifying paragraphs", dropped, len(papers))
    return [p for p in picked if p is not None]


def score_pairs(pairs: list[SectionPair], scorer: UnitScorer) -> list[SectionPair]:
    """Attach unit scores to every pair (each distinct unit string scored once)."""
    flat = list(dict.fromkeys(u.text for p in pairs for g in (p.intro_units, p.related_units)
                              for s in g for u in s))
    table = dict(zip(flat, np.asarray(scorer.score_units(flat), dtype=np.float64).tolist())) if flat else {}

    for p in pairs:
        p.intro_units = [[u.with_score(table[u.text]) for u in s] for s in p.intro_units]
        p.related_units = [[u.with_score(table[u.text]) for u in s] for s in p.related_units]
    return pairs


# --------------------------------------------------------------- comparison


@dataclass
class SectionComparison:
    n: int
    ordering: float
    ties: float
    reverse: float
    intro_mean: float
    intro_std: float
    related_mean: float
    related_std: float
    tests: dict = field(default_factory=dict)
    d_z: float | None = None
    spec: str = DEFAULT_SPEC.name
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "spec": self.spec, "ordering": self.ordering, "ties": self.ties, "reverse": self.reverse,
            "intro_mean": self.intro_mean, "intro_std": self.intro_std,
            "related_mean": self.related_mean, "related_std": self.related_std, "d_z": self.d_z,
            "tests": {k: v.to_dict() for k, v in self.tests.items()}, "warnings": self.warnings,
        }


def ordering_fractions(intro: Sequence[float], related: Sequence[float]) -> tuple[float, float, float]:
    """``(greater, equal, less)`` fractions of paired comparisons.

    All three are integer counts over the same denominator and the counts
    partition the pairs, so the fractions sum to 1 up to float rounding.
    """
    a = np.asarray(intro, dtype=np.float64)
    b = np.asarray(related, dtype=np.float64)
    n = a.size
    if n == 0:
        raise DegenerateTestError("no paired sections")
    gt = int((a > b).sum())
    eq = int((a == b).sum())
    return gt / n, eq / n, (n - gt - eq) / n


def compare_scores(intro: Sequence[float], related: Sequence[float], spec_name: str = DEFAULT_SPEC.name) -> SectionComparison:
    a = np.asarray(intro, dtype=np.float64)
    b = np.asarray(related, dtype=np.float64)
    gt, eq, lt = ordering_fractions(a, b)
    res = SectionComparison(
        n=int(a.size), ordering=gt, ties=eq, reverse=lt,
        intro_mean=float(a.mean()), intro_std=float(a.std(ddof=1)) if a.size > 1 else 0.0,
        related_mean=float(b.mean()), related_std=float(b.std(ddof=1)) if b.size > 1 else 0.0,
        spec=spec_name,
    )
    if a.size < MIN_PAPERS:
        res.warnings.append(f"insufficient data: only {a.size} usable papers (fewer than {MIN_PAPERS})")
    try:
        t = paired_tests(a, b)
        res.d_z = t.pop("cohens_dz")
        res.tests = t
    except DegenerateTestError as exc:
        res.warnings.append(f"paired tests skipped: {exc}")
    for w in res.warnings:
        logger.warning(w)
    return res


def section_compare(
    papers: Sequence[Paper] | Sequence[SectionPair],
    scorer: UnitScorer,
    spec: AggregationSpec = DEFAULT_SPEC,
    annotator: Annotator | None = None,
    jobs: int = 1,
) -> tuple[SectionComparison, list[SectionPair]]:
    """Score selected paragraphs and test Introduction > Related Work."""
    pairs = list(papers)
    if pairs and isinstance(pairs[0], Paper):
        pairs = select_pairs(pairs, annotator, jobs=jobs)
    if not pairs:
        raise DegenerateTestError("no paper has qualifying Introduction and Related Work paragraphs")
    score_pairs(pairs, scorer)
    for p in pairs:
        p.intro_score = report_from_units(p.intro_units, spec).document_score
        p.related_score = report_from_units(p.related_units, spec).document_score
    res = compare_scores([p.intro_score for p in pairs], [p.related_score for p in pairs], spec.name)
    return res, pairs


def aggregation_sweep(pairs: Sequence[SectionPair], strategies: Sequence[AggregationSpec]) -> list[dict]:
    """Ordering accuracy (percent) per strategy, reusing the pairs' unit scores.

    ``pairs`` must already carry unit scores (see :func:`score_pairs` or
    :func:`section_compare`).
    """
    rows = []
    for spec in strategies:
        a = [report_from_units(p.intro_units, spec).document_score for p in pairs]
        b = [report_from_units(p.related_units, spec).document_score for p in pairs]
        gt, eq, lt = ordering_fractions(a, b)
        rows.append({"strategy": spec.name, "ordering_accuracy": 100.0 * gt, "ties": 100.0 * eq,
                     "reverse": 100.0 * lt, "n": len(pairs)})
    return rows


def pairs_to_rows(pairs: Sequence[SectionPair]) -> list[dict]:
    return [{"paper_id": p.paper_id, "intro_score": p.intro_score, "related_score": p.related_score,
             "intro_units": _n_units(p.intro_units), "related_units": _n_units(p.related_units),
             "intro_text": p.intro_text, "related_text": p.related_text} for p in pairs]
