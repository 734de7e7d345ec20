"""Linguistic annotation behind a small pluggable interface.

An :class:`Annotator` turns raw text into sentences of tokens with a coarse
part-of-speech tag, a stop-word flag and noun-phrase chunk boundaries.
Two implementations ship:

* :class:`LexiconAnnotator` (the default) uses spaCy's rule-based English
  tokenizer and sentencizer, spaCy's English stop list, and a tagger and
  chunker driven by WordNet part-of-speech sense counts plus closed-class
  word lists. It needs no downloaded pipeline and is fully deterministic.
* :class:`SpacyAnnotator` wraps a trained spaCy pipeline (for example
  ``en_core_web_sm``) when one is installed, using its parser's noun chunks.
"""

from __future__ import annotations

import re
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

from ..errors import AnnotationError

# Coarse tags (a subset of the Universal POS inventory).
NOUN, PROPN, VERB, ADJ, ADV, NUM, PRON, DET, ADP, AUX, CCONJ, PART, SYM = (
    "NOUN", "PROPN", "VERB", "ADJ", "ADV", "NUM", "PRON", "DET", "ADP", "AUX", "CCONJ", "PART", "SYM",
)

_HAS_ALNUM = re.compile(r"[^\W_]", re.UNICODE)


def is_symbolic(text: str) -> bool:
    """True for tokens with no letter or digit."""
    return _HAS_ALNUM.search(text) is None


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int
    pos: str
    is_stop: bool

    @property
    def is_symbol(self) -> bool:
        return is_symbolic(self.text)


@dataclass(frozen=True)
class Sentence:
    start: int
    end: int
    tokens: tuple[Token, ...]
    chunks: tuple[tuple[int, int], ...] = field(default=())  # token index ranges [i, j)


class Annotator(ABC):
    name: str = "annotator"

    @abstractmethod
    def annotate(self, text: str) -> list[Sentence]:
        """Split ``text`` into annotated sentences."""

    def __call__(self, text: str) -> list[Sentence]:
        return self.annotate(text)


def _stop_words() -> frozenset[str]:
    from spacy.lang.en.stop_words import STOP_WORDS

    return frozenset(STOP_WORDS)


# ------------------------------------------------------------------ lexicon

_DET = {"a", "an", "the", "this", "that", "these", "those", "every", "each", "some", "any", "no",
        "another", "all", "both", "either", "neither", "such", "what", "which", "whose", "several",
        "many", "much", "few", "most", "more", "less", "fewer"}
_POSS = {"my", "your", "his", "her", "its", "our", "their"}
_PRON = {"i", "you", "he", "she", "it", "we", "they", "me", "him", "us", "them", "myself", "yourself",
         "himself", "herself", "itself", "ourselves", "themselves", "who", "whom", "mine", "yours",
         "hers", "ours", "theirs", "someone", "something", "anyone", "anything", "everyone",
         "everything", "nobody", "nothing", "one"}
_ADP = {"of", "in", "on", "at", "by", "for", "with", "from", "to", "into", "onto", "about", "over",
        "under", "between", "among", "through", "during", "before", "after", "above", "below",
        "against", "without", "within", "along", "across", "behind", "beyond", "near", "toward",
        "towards", "upon", "around", "via", "per", "since", "until", "despite", "like", "than", "as"}
_CCONJ = {"and", "or", "but", "nor", "yet", "so", "whereas", "while", "although", "though", "because",
          "if", "unless", "whether", "that"}
_AUX = {"be", "is", "am", "are", "was", "were", "been", "being", "have", "has", "had", "having", "do",
        "does", "did", "will", "would", "shall", "should", "can", "could", "may", "might", "must"}
_PART = {"not", "n't", "'s", "’s", "'", "to"}
_CLOSED = [(_POSS, DET), (_DET, DET), (_PRON, PRON), (_AUX, AUX), (_ADP, ADP), (_CCONJ, CCONJ), (_PART, PART)]

_ADJ_SUFFIX = ("ous", "ful", "ive", "able", "ible", "ical", "ic", "less", "ish", "ary", "al", "ian", "ese")
_WN_TAG = {"noun": NOUN, "verb": VERB, "adj": ADJ, "adv": ADV}
_NP_MODIFIER = {ADJ, NUM, NOUN, PROPN}
_NP_HEAD = {NOUN, PROPN}


class LexiconAnnotator(Annotator):
    """Deterministic rule-based annotator (the pinned default)."""

    name = "lexicon-v1"

    def __init__(self, wordnet=None):
        self._wordnet = wordnet
        self._local = threading.local()
        self._stop = _stop_words()
        self._lock = threading.Lock()
        self._pos_cache: dict[str, dict[str, int]] = {}

    # spaCy tokenizers are cheap; keep one per thread rather than sharing one.
    def _nlp(self):
        nlp = getattr(self._local, "nlp", None)
        if nlp is None:
            import spacy

            nlp = spacy.blank("en")
            nlp.add_pipe("sentencizer")
            self._local.nlp = nlp
        return nlp

    def _wn(self):
        if self._wordnet is None:
            from ..wordnet import load_wordnet

            with self._lock:
                if self._wordnet is None:
                    self._wordnet = load_wordnet()
        return self._wordnet

    def _pos_counts(self, lower: str) -> dict[str, int]:
        counts = self._pos_cache.get(lower)
        if counts is None:
            counts = self._wn().pos_frequencies(lower)
            self._pos_cache[lower] = counts
        return counts

    def annotate(self, text: str) -> list[Sentence]:
        try:
            doc = self._nlp()(text)
        except Exception as exc:  # pragma: no cover - spaCy tokenizer does not normally fail
            raise AnnotationError(f"tokenizer failed: {exc}", 0) from exc
        out = []
        for sent in doc.sents:
            try:
                raw = _merge_hyphens([(t.text, t.idx, t.idx + len(t.text), t.whitespace_) for t in sent])
                tags = self._tag(raw)
                tokens = tuple(
                    Token(w, s, e, tag, w.lower() in self._stop) for (w, s, e), tag in zip(raw, tags)
                )
                chunks = tuple(_chunk(tokens))
            except AnnotationError:
                raise
            except Exception as exc:
                raise AnnotationError(f"annotation failed: {exc}", sent.start_char) from exc
            if tokens:
                out.append(Sentence(tokens[0].start, tokens[-1].end, tokens, chunks))
        return out

    def _candidates(self, word: str) -> dict[str, float]:
        lower = word.lower()
        counts = self._pos_counts(lower) if "-" not in lower else {}
        if counts:
            return {_WN_TAG[p]: float(c) for p, c in counts.items()}
        if "-" in lower:
            return {ADJ: 1.0, NOUN: 1.0}
        if lower.endswith("ly"):
            return {ADV: 1.0}
        if lower.endswith(("ing", "ed")):
            return {VERB: 1.0, ADJ: 0.5}
        if lower.endswith(_ADJ_SUFFIX):
            return {ADJ: 1.0, NOUN: 0.5}
        return {NOUN: 1.0}

    def _tag(self, raw: list[tuple[str, int, int]]) -> list[str]:
        tags: list[str] = []
        n = len(raw)
        for i, (word, _s, _e) in enumerate(raw):
            lower = word.lower()
            prev = tags[-1] if tags else None
            if is_symbolic(word):
                tags.append(SYM)
                continue
            if re.fullmatch(r"[\d.,:/%-]*\d[\d.,:/%-]*(s|st|nd|rd|th)?", lower):
                tags.append(NUM)
                continue
            if lower in ("'s", "’s") and prev in (NOUN, PROPN):
                tags.append(PART)
                continue
            closed = next((tag for words, tag in _CLOSED if lower in words), None)
            if lower == "to":
                closed = PART if i + 1 < n and self._candidates(raw[i + 1][0]).get(VERB) else ADP
            if lower == "that" and i + 1 < n and raw[i + 1][0].lower() in _AUX | _PRON:
                closed = CCONJ
            elif lower == "that":
                closed = DET
            if closed is not None:
                tags.append(closed)
                continue
            capital = word[:1].isupper()
            next_capital = i + 1 < n and raw[i + 1][0][:1].isupper() and not is_symbolic(raw[i + 1][0])
            if capital and (i > 0 or next_capital or not self._pos_counts(lower)):
                tags.append(PROPN)
                continue
            cand = self._candidates(word)
            score = dict(cand)
            if prev in (DET, ADJ, NUM, ADP):
                score = _bias(score, {NOUN: 4.0, ADJ: 2.0, VERB: 0.2, ADV: 0.5})
            if prev in (PRON, AUX, NOUN, PROPN) or (prev == PART and raw[i - 1][0].lower() == "to"):
                score = _bias(score, {VERB: 4.0})
            if i + 1 < n and ADJ in cand:
                nxt = self._candidates(raw[i + 1][0]) if not is_symbolic(raw[i + 1][0]) else {}
                if NOUN in nxt:
                    score = _bias(score, {ADJ: 3.0})
            tags.append(max(score, key=lambda t: (score[t], t)))
        return tags


def _bias(score: dict[str, float], factors: dict[str, float]) -> dict[str, float]:
    return {t: v * factors.get(t, 1.0) for t, v in score.items()}


def _merge_hyphens(raw):
    """Glue ``word-word`` sequences the tokenizer split back together."""
    out: list[list] = []
    i = 0
    while i < len(raw):
        text, s, e, ws = raw[i]
        if (
            out
            and text in ("-", "–")
            and not out[-1][3]
            and not ws
            and i + 1 < len(raw)
            and not is_symbolic(raw[i + 1][0])
            and not is_symbolic(out[-1][0])
        ):
            nxt = raw[i + 1]
            prev = out[-1]
            out[-1] = [prev[0] + text + nxt[0], prev[1], nxt[2], nxt[3]]
            i += 2
            continue
        out.append([text, s, e, ws])
        i += 1
    return [(t, s, e) for t, s, e, _ in out]


def _chunk(tokens: tuple[Token, ...]):
    """Maximal ``DET? (ADJ|NUM|NOUN|PROPN|'s)* (NOUN|PROPN|NUM)`` spans.

    A bare number only closes a chunk when something precedes it in the
    chunk ("the first 900"); on its own it stays a plain token.
    """
    i, n = 0, len(tokens)
    while i < n:
        j = i
        if tokens[j].pos == DET:
            j += 1
        end = None
        k = j
        while k < n and (tokens[k].pos in _NP_MODIFIER or (tokens[k].pos == PART and tokens[k].text in ("'s", "’s"))):
            is_head = tokens[k].pos in _NP_HEAD or (tokens[k].pos == NUM and k > i)
            k += 1
            if is_head:
                end = k
        if end is not None and end - i >= 1:
            yield (i, end)
            i = end
        else:
            i += 1


# -------------------------------------------------------------------- spaCy


class SpacyAnnotator(Annotator):
    """Annotator backed by a trained spaCy pipeline with a dependency parser."""

    def __init__(self, model: str = "en_core_web_sm"):
        import spacy

        try:
            self._nlp = spacy.load(model)
        except OSError as exc:
            raise AnnotationError(f"spaCy pipeline {model!r} is not installed: {exc}") from exc
        self.name = f"spacy:{model}"
        self._lock = threading.Lock()

    def annotate(self, text: str) -> list[Sentence]:
        try:
            with self._lock:
                doc = self._nlp(text)
        except Exception as exc:
            raise AnnotationError(f"spaCy failed: {exc}", 0) from exc
        out = []
        for sent in doc.sents:
            toks = tuple(
                Token(t.text, t.idx, t.idx + len(t.text), t.pos_, bool(t.is_stop)) for t in sent
            )
            if not toks:
                continue
            base = sent.start
            chunks = tuple(
                (nc.start - base, nc.end - base)
                for nc in doc.noun_chunks
                if nc.start >= sent.start and nc.end <= sent.end
            )
            out.append(Sentence(toks[0].start, toks[-1].end, toks, chunks))
        return out


_default: Annotator | None = None
_default_lock = threading.Lock()


def default_annotator() -> Annotator:
    global _default
    with _default_lock:
        if _default is None:
            _default = LexiconAnnotator()
        return _default


def resolve_annotator(name: str | None) -> Annotator:
    if name in (None, "", "lexicon", LexiconAnnotator.name):
        return default_annotator()
    if name.startswith("spacy:"):
        return SpacyAnnotator(name.split(":", 1)[1])
    raise ValueError(f"unknown annotator {name!r}")
