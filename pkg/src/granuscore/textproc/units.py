"""Referential-unit extraction."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .annotate import Annotator, Sentence, default_annotator


@dataclass(frozen=True)
class ReferentialUnit:
    text: str
    span: tuple[int, int]
    n_tokens: int = 1
    score: float | None = None
    kind: str = "token"  # "np" for an intact noun phrase

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("a referential unit cannot be blank")
        s, e = self.span
        if not 0 <= s < e:
            raise ValueError(f"invalid span {self.span}")

    def with_score(self, score: float) -> "ReferentialUnit":
        return replace(self, score=float(score))

    def to_dict(self) -> dict:
        return {"text": self.text, "span": list(self.span), "n_tokens": self.n_tokens,
                "kind": self.kind, "score": self.score}


def sentence_units(text: str, sentence: Sentence) -> list[ReferentialUnit]:
    """Units of one annotated sentence, in textual order.

    Noun phrases are emitted whole unless every token in them is a stop word
    or a symbol. Tokens outside noun phrases are emitted one by one, minus
    stop words and tokens with no letter or digit.
    """
    toks = sentence.tokens
    units = []
    covered = [False] * len(toks)
    starts = {}
    for i, j in sentence.chunks:
        for k in range(i, j):
            covered[k] = True
        starts[i] = j
    k = 0
    while k < len(toks):
        if k in starts:
            j = starts[k]
            members = toks[k:j]
            content = [t for t in members if not t.is_stop and not t.is_symbol]
            if content:
                s, e = members[0].start, members[-1].end
                n = sum(1 for t in members if not t.is_symbol)
                units.append(ReferentialUnit(text[s:e], (s, e), n, kind="np"))
            k = j
            continue
        t = toks[k]
        if not covered[k] and not t.is_stop and not t.is_symbol:
            units.append(ReferentialUnit(t.text, (t.start, t.end), 1))
        k += 1
    return units


def extract_units(text: str, annotator: Annotator | None = None) -> list[tuple[int, ReferentialUnit]]:
    """``(sentence index, unit)`` pairs for every referential unit in ``text``."""
    annotator = annotator or default_annotator()
    out = []
    for si, sent in enumerate(annotator.annotate(text)):
        out.extend((si, u) for u in sentence_units(text, sent))
    return out


def units_by_sentence(text: str, annotator: Annotator | None = None) -> list[list[ReferentialUnit]]:
    """Units grouped per sentence. Sentences without units are omitted."""
    annotator = annotator or default_annotator()
    groups = []
    for sent in annotator.annotate(text):
        units = sentence_units(text, sent)
        if units:
            groups.append(units)
    return groups
