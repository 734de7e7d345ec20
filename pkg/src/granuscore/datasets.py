"""Dataset ingestion: GRANOLA-EQ answer hierarchies, splits, calibration corpus, QA records."""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, IngestionError, ResolutionError

logger = logging.getLogger(__name__)

MAX_REALIZATIONS = 4
SPLITS = ("train", "dev", "test")


# ------------------------------------------------------------------ GRANOLA


@dataclass(frozen=True)
class Realization:
    text: str
    level: float


@dataclass(frozen=True)
class GranolaEntry:
    entry_id: str
    question: str
    relation_id: str
    realizations: tuple[Realization, ...]

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.realizations]

    @property
    def levels(self) -> list[float]:
        return [r.level for r in self.realizations]


def normalize_levels(n: int) -> list[float]:
    """Evenly spaced levels from 1 (finest) to 4 (coarsest) for ``n`` answers."""
    if isinstance(n, bool) or int(n) != n or not 1 <= n <= MAX_REALIZATIONS:
        raise ValueError(f"number of realizations must be an integer in [1, {MAX_REALIZATIONS}], got {n}")
    n = int(n)
    if n == 1:
        return [1.0]
    return [1.0 + 3.0 * i / (n - 1) for i in range(n)]


@dataclass
class GranolaFields:
    """Field names to look for in a GRANOLA-EQ record; the first present wins."""

    question: Sequence[str] = ("question", "masked_question", "query")
    relation: Sequence[str] = ("relation_id", "relation", "relation_type", "prop_id")
    answers: Sequence[str] = ("granola_answers", "answers", "realizations", "hierarchy", "answer_hierarchy")
    original_answer: Sequence[str] = ("answer", "original_answer", "label")
    entry_id: Sequence[str] = ("id", "entry_id", "qid", "idx")
    answer_text: Sequence[str] = ("answer", "text", "value", "name", "label")


def _first_key(record: dict, names: Sequence[str]) -> str | None:
    for n in names:
        if n in record and record[n] not in (None, ""):
            return n
    return None


def _first(record: dict, names: Sequence[str]):
    key = _first_key(record, names)
    return None if key is None else record[key]


def _as_text(item, fields: GranolaFields) -> str | None:
    if isinstance(item, str):
        return item.strip() or None
    if isinstance(item, (list, tuple)):  # alias list: first alias is the surface form
        return _as_text(item[0], fields) if item else None
    if isinstance(item, dict):
        return _as_text(_first(item, fields.answer_text), fields)
    return None


def _parse_answers(raw, fields: GranolaFields) -> list[str]:
    if isinstance(raw, str):
        s = raw.strip()
        if s.startswith("["):
            raw = json.loads(s)
        else:
            raw = [p for p in s.split("|")]
    if not isinstance(raw, (list, tuple)):
        raise ValueError(f"answer hierarchy must be a list, got {type(raw).__name__}")
    out = []
    for item in raw:
        t = _as_text(item, fields)
        if t is None:
            raise ValueError(f"unreadable realization {item!r}")
        out.append(t)
    return out


def _iter_records(source) -> Iterable[tuple[int, object]]:
    """Yield ``(line-or-row number, record)`` from JSON, JSON-lines or CSV."""
    if isinstance(source, (list, tuple)):
        yield from enumerate(source, 1)
        return
    path = Path(source)
    text = path.read_text(encoding="utf-8")
    suffix = path.suffix.lower()
    if suffix in (".csv", ".tsv"):
        reader = csv.DictReader(io.StringIO(text), delimiter="\t" if suffix == ".tsv" else ",")
        yield from enumerate(reader, 2)
        return
    stripped = text.lstrip()
    if stripped.startswith("["):
        yield from enumerate(json.loads(text), 1)
        return
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip():
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, exc


def load_granola(
    source,
    fields: GranolaFields | None = None,
    max_malformed_fraction: float = 0.05,
    prepend_original: bool = True,
) -> list[GranolaEntry]:
    """Read GRANOLA-EQ answer hierarchies (finest realization first).

    Records with more than four realizations are dropped. Malformed records
    are skipped with a warning; more than ``max_malformed_fraction`` of them
    raises :class:`IngestionError`. When a record carries the original
    answer separately from its coarser realizations, the original answer is
    prepended unless it already opens the list. Repeated realizations inside
    one hierarchy keep their first (finest) position.
    """
    fields = fields or GranolaFields()
    entries: list[GranolaEntry] = []
    total = malformed = too_long = 0
    for lineno, rec in _iter_records(source):
        total += 1
        try:
            if isinstance(rec, Exception):
                raise ValueError(str(rec))
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            question = _first(rec, fields.question)
            answers_key = _first_key(rec, fields.answers)
            raw = None if answers_key is None else rec[answers_key]
            if not isinstance(question, str) or not question.strip():
                raise ValueError("missing question")
            if raw is None:
                raise ValueError("missing answer hierarchy")
            texts = _parse_answers(raw, fields)
            orig_key = _first_key(rec, [f for f in fields.original_answer if f != answers_key])
            if prepend_original and orig_key is not None:
                o = _as_text(rec[orig_key], fields)
                if o and (not texts or texts[0].casefold() != o.casefold()):
                    texts.insert(0, o)
            seen, uniq = set(), []
            for t in texts:
                key = realization_key(t)
                if key not in seen:
                    seen.add(key)
                    uniq.append(t)
            if not uniq:
                raise ValueError("empty answer hierarchy")
        except (ValueError, TypeError, json.JSONDecodeError) as exc:
            malformed += 1
            logger.warning("GRANOLA record %s skipped: %s", lineno, exc)
            continue
        if len(uniq) > MAX_REALIZATIONS:
            too_long += 1
            continue
        eid = _first(rec, fields.entry_id)
        rel = _first(rec, fields.relation)
        levels = normalize_levels(len(uniq))
        entries.append(
            GranolaEntry(
                str(eid) if eid is not None else str(lineno),
                question.strip(),
                "" if rel is None else str(rel),
                tuple(Realization(t, lv) for t, lv in zip(uniq, levels)),
            )
        )
    if total == 0:
        logger.warning("GRANOLA source is empty")
        return []
    if malformed > max_malformed_fraction * total:
        raise IngestionError(f"{malformed} of {total} GRANOLA records are malformed")
    ids = Counter(e.entry_id for e in entries)
    if any(c > 1 for c in ids.values()):
        # fall back to positional ids so split tables stay unambiguous
        entries = [GranolaEntry(str(i), e.question, e.relation_id, e.realizations) for i, e in enumerate(entries)]
    logger.info("loaded %d GRANOLA entries (%d dropped with >%d realizations, %d malformed)",
                len(entries), too_long, MAX_REALIZATIONS, malformed)
    return entries


def size_distribution(entries: Sequence[GranolaEntry]) -> dict[int, float]:
    """Share of entries with 1..4 realizations."""
    counts = Counter(len(e.realizations) for e in entries)
    n = max(len(entries), 1)
    return {k: counts.get(k, 0) / n for k in range(1, MAX_REALIZATIONS + 1)}


# ------------------------------------------------------------------- splits


def realization_key(text: str) -> str:
    return " ".join(text.split()).casefold()


@dataclass
class SplitAssignment:
    splits: dict[str, str]  # entry id -> split
    seed: int
    ownership: dict[str, str] = field(default_factory=dict)  # realization key -> split
    warnings: list[str] = field(default_factory=list)

    def entries(self, entries: Sequence[GranolaEntry], split: str) -> list[GranolaEntry]:
        return [e for e in entries if self.splits[e.entry_id] == split]

    def sizes(self) -> dict[str, int]:
        c = Counter(self.splits.values())
        return {s: c.get(s, 0) for s in SPLITS}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["entry_id", "split"])
            for eid, split in self.splits.items():
                w.writerow([eid, split])

    @classmethod
    def from_csv(cls, path, seed: int = -1) -> "SplitAssignment":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls({r["entry_id"]: r["split"] for r in rows}, seed)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def split_by_realization(
    entries: Sequence[GranolaEntry],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitAssignment:
    """Assign entries to train/dev/test so that no realization crosses splits.

    Entries sharing a realization (case-folded, whitespace-normalized) are
    joined into one component. Components go, largest first, to whichever
    split is furthest below its target entry count. The seed orders
    equal-size components.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise ConfigurationError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    n = len(entries)
    uf = _UnionFind(n)
    first_owner: dict[str, int] = {}
    for i, e in enumerate(entries):
        for r in e.realizations:
            k = realization_key(r.text)
            if k in first_owner:
                uf.union(first_owner[k], i)
            else:
                first_owner[k] = i
    comps: dict[int, list[int]] = {}
    for i in range(n):
        comps.setdefault(uf.find(i), []).append(i)
    groups = list(comps.values())
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(groups))
    groups = [groups[i] for i in order]
    groups.sort(key=len, reverse=True)  # stable: seed order survives among equal sizes

    targets = [r * n for r in ratios]
    counts = [0, 0, 0]
    assign: dict[str, str] = {}
    warnings: list[str] = []
    for g in groups:
        if len(g) > max(targets):
            msg = f"a component of {len(g)} linked entries exceeds every split target; assigned to train"
            logger.warning(msg)
            warnings.append(msg)
            s = 0
        else:
            deficits = [t - c for t, c in zip(targets, counts)]
            s = int(np.argmax(deficits))
        counts[s] += len(g)
        for i in g:
            assign[entries[i].entry_id] = SPLITS[s]
    ownership = {k: assign[entries[i].entry_id] for k, i in first_owner.items()}
    ordered = {e.entry_id: assign[e.entry_id] for e in entries}
    return SplitAssignment(ordered, seed, ownership, warnings)


def leakage(assignment: SplitAssignment, entries: Sequence[GranolaEntry]) -> dict[tuple[str, str], set[str]]:
    """Realization keys shared between each pair of splits (all empty when leak-free)."""
    sets = {s: set() for s in SPLITS}
    for e in entries:
        sets[assignment.splits[e.entry_id]].update(realization_key(r.text) for r in e.realizations)
    return {(a, b): sets[a] & sets[b] for i, a in enumerate(SPLITS) for b in SPLITS[i + 1 :]}


# ------------------------------------------------------------- calibration


def load_calibration_corpus(source=None) -> list[str]:
    """Deduplicated calibration strings.

    ``source=None`` means the WordNet 3.0 noun lemmas (cased, underscores
    as spaces). Otherwise a text file with one string per line.
    """
    if source is None or str(source) == "wordnet":
        from .wordnet import load_wordnet

        items = load_wordnet().noun_lemmas(preserve_case=True)
    else:
        path = Path(source)
        if not path.is_file():
            raise ResolutionError(
                f"calibration corpus {path} not found; pass a file with one string per line "
                "or omit it to use the WordNet noun lemmas (pip install wn==0.0.23)"
            )
        items = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    return list(dict.fromkeys(x for x in items if x))


# --------------------------------------------------------------- QA records


class Outcome(str, Enum):
    CORRECT = "correct"
    WRONG = "wrong"
    NOT_ATTEMPTED = "not_attempted"


QA_FIELDS = ("dataset_id", "question", "gold_answer", "model_id", "model_answer", "outcome")


@dataclass(frozen=True)
class QARecord:
    dataset_id: str
    question: str
    gold_answer: str
    model_id: str
    model_answer: str
    outcome: Outcome

    @property
    def failed(self) -> bool:
        return self.outcome is not Outcome.CORRECT


def _qa_record(rec: dict) -> QARecord:
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    missing = [f for f in QA_FIELDS if f not in rec or rec[f] is None]
    if missing:
        raise ValueError(f"missing field(s) {', '.join(missing)}")
    raw = str(rec["outcome"]).strip().lower().replace(" ", "_").replace("-", "_")
    try:
        outcome = Outcome(raw)
    except ValueError:
        allowed = ", ".join(o.value for o in Outcome)
        raise ValueError(f"unknown outcome {rec['outcome']!r}; allowed values: {allowed}") from None
    vals = {f: str(rec[f]) for f in QA_FIELDS[:-1]}
    for f in ("dataset_id", "question", "gold_answer", "model_id"):
        if not vals[f].strip():
            raise ValueError(f"field {f} is empty")
    if outcome is not Outcome.NOT_ATTEMPTED and not vals["model_answer"].strip():
        raise ValueError("model_answer is empty for an attempted response")
    return QARecord(outcome=outcome, **vals)


def load_qa_records(path, strict: bool = True) -> list[QARecord]:
    """Read graded QA records from a JSON-lines file.

    With ``strict=True`` any invalid line raises :class:`DataError` listing
    every bad line number; otherwise bad lines are logged and skipped.
    """
    records, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(_qa_record(json.loads(line)))
            except (ValueError, json.JSONDecodeError) as exc:
                errors.append(f"line {lineno}: {exc}")
    if errors:
        if strict:
            more = f" (and {len(errors) - 10} more)" if len(errors) > 10 else ""
            raise DataError(f"{path}: " + "; ".join(errors[:10]) + more)
        for e in errors:
            logger.warning("%s: %s", path, e)
    return records
