"""Training-free granularity baselines."""

from __future__ import annotations


def word_count_score(text: str) -> float:
    """Negative whitespace token count: longer answers count as finer."""
    return -float(len(text.split()))


class TaxonomyDepth:
    """Average WordNet noun depth of the synsets matching a whole text.

    The text is looked up as one lemma (spaces become underscores, with
    morphological base forms tried as well). Texts without any matching
    noun synset are reported as not covered.
    """

    def __init__(self, wordnet=None):
        if wordnet is None:
            from ..wordnet import load_wordnet

            wordnet = load_wordnet()
        self.wordnet = wordnet

    def __call__(self, text: str) -> tuple[float | None, bool]:
        wn = self.wordnet
        synsets = []
        seen = set()
        for base in wn.morphy(text, "noun"):
            for s in wn.synsets(base, "noun"):
                if s.offset not in seen:
                    seen.add(s.offset)
                    synsets.append(s)
        if not synsets:
            return None, False
        depths = [wn.min_depth(s) for s in synsets]
        return sum(depths) / len(depths), True


_taxonomy: TaxonomyDepth | None = None


def baseline_score(text: str, method: str) -> tuple[float | None, bool]:
    """``(score, covered)`` for ``word_count`` or ``taxonomy_depth``.

    ``word_count`` always covers; ``taxonomy_depth`` returns the average
    root distance (larger is finer) or ``(None, False)``.
    """
    global _taxonomy
    if method == "word_count":
        return word_count_score(text), True
    if method == "taxonomy_depth":
        if _taxonomy is None:
            _taxonomy = TaxonomyDepth()  # raises ResolutionError without WordNet
        return _taxonomy(text)
    raise ValueError(f"unknown baseline {method!r}; choose word_count or taxonomy_depth")
