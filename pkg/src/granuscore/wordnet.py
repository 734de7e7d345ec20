"""Minimal reader for the WordNet 3.0 database files.

Reads the standard ``index.*``/``data.*``/``*.exc``/``cntlist.rev`` files
directly. Only what this package needs is exposed: noun lemmas, hypernym
depth, per-part-of-speech sense frequencies and ``morphy``-style
lemmatization.

The database directory is located through, in order:

1. the ``GRANUSCORE_WORDNET_DIR`` environment variable,
2. the WordNet 3.0 copy bundled with the ``wn==0.0.23`` distribution,
3. ``~/nltk_data/corpora/wordnet`` (an unzipped NLTK download).
"""

from __future__ import annotations

import importlib.util
import os
import threading
from collections import defaultdict
from functools import lru_cache
from pathlib import Path

from .errors import ResolutionError

POS = ("noun", "verb", "adj", "adv")
_SS_TYPE = {"n": "noun", "v": "verb", "a": "adj", "s": "adj", "r": "adv"}
_SENSE_KEY_POS = {"1": "noun", "2": "verb", "3": "adj", "4": "adv", "5": "adj"}

# Detachment rules from the WordNet morphy(7) manual page.
_SUFFIXES = {
    "noun": [("s", ""), ("ses", "s"), ("xes", "x"), ("zes", "z"), ("ches", "ch"), ("shes", "sh"),
             ("men", "man"), ("ies", "y")],
    "verb": [("s", ""), ("ies", "y"), ("es", "e"), ("es", ""), ("ed", "e"), ("ed", ""),
             ("ing", "e"), ("ing", "")],
    "adj": [("er", ""), ("est", ""), ("er", "e"), ("est", "e")],
    "adv": [],
}

_README = (
    "WordNet 3.0 database files not found. Either `pip install wn==0.0.23` (which bundles "
    "them), unzip NLTK's wordnet corpus into ~/nltk_data/corpora/wordnet, or point "
    "GRANUSCORE_WORDNET_DIR at a directory containing index.noun and data.noun."
)


def find_wordnet_dir() -> Path:
    candidates = []
    env = os.environ.get("GRANUSCORE_WORDNET_DIR")
    if env:
        candidates.append(Path(env))
    spec = importlib.util.find_spec("wn")
    if spec is not None and spec.submodule_search_locations:
        for loc in spec.submodule_search_locations:
            candidates.append(Path(loc) / "data" / "wordnet-3.0")
    candidates.append(Path.home() / "nltk_data" / "corpora" / "wordnet")
    for c in candidates:
        if (c / "index.noun").is_file() and (c / "data.noun").is_file():
            return c
    raise ResolutionError(_README)


class Synset:
    __slots__ = ("offset", "pos", "lemmas", "hypernyms")

    def __init__(self, offset, pos, lemmas, hypernyms):
        self.offset = offset
        self.pos = pos
        self.lemmas = lemmas
        self.hypernyms = hypernyms

    def __repr__(self):
        return f"Synset({self.lemmas[0]!r}, {self.pos}, {self.offset})"


class WordNet:
    """Lazily parsed view of one WordNet database directory."""

    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else find_wordnet_dir()
        if not (self.root / "index.noun").is_file():
            raise ResolutionError(f"{self.root} has no index.noun. {_README}")
        self._lock = threading.Lock()
        self._index: dict[str, dict[str, list[int]]] = {}
        self._synsets: dict[str, dict[int, Synset]] = {}
        self._exc: dict[str, dict[str, list[str]]] = {}
        self._freq: dict[tuple[str, str], int] | None = None
        self._depth: dict[int, int] = {}

    # ---------------------------------------------------------------- parsing

    def _load_index(self, pos: str) -> dict[str, list[int]]:
        with self._lock:
            if pos not in self._index:
                idx = {}
                with open(self.root / f"index.{pos}", encoding="utf-8", errors="replace") as fh:
                    for line in fh:
                        if line.startswith(" "):
                            continue
                        f = line.split()
                        lemma, p_cnt = f[0], int(f[3])
                        synset_cnt = int(f[2])
                        offsets = f[6 + p_cnt :]
                        idx[lemma] = [int(o) for o in offsets[:synset_cnt]]
                self._index[pos] = idx
            return self._index[pos]

    def _load_data(self, pos: str) -> dict[int, Synset]:
        with self._lock:
            if pos not in self._synsets:
                table = {}
                with open(self.root / f"data.{pos}", encoding="utf-8", errors="replace") as fh:
                    for line in fh:
                        if line.startswith(" "):
                            continue
                        f = line.split(" | ")[0].split()
                        offset = int(f[0])
                        w_cnt = int(f[3], 16)
                        words = [f[4 + 2 * i].split("(")[0] for i in range(w_cnt)]
                        p = 4 + 2 * w_cnt
                        p_cnt = int(f[p])
                        hyper = []
                        for j in range(p_cnt):
                            sym, target, tpos = f[p + 1 + 4 * j : p + 4 + 4 * j]
                            if sym in ("@", "@i") and _SS_TYPE.get(tpos) == pos:
                                hyper.append(int(target))
                        table[offset] = Synset(offset, pos, words, tuple(hyper))
                self._synsets[pos] = table
            return self._synsets[pos]

    def _load_exceptions(self, pos: str) -> dict[str, list[str]]:
        with self._lock:
            if pos not in self._exc:
                exc = defaultdict(list)
                path = self.root / f"{pos}.exc"
                if path.is_file():
                    with open(path, encoding="utf-8", errors="replace") as fh:
                        for line in fh:
                            f = line.split()
                            if len(f) >= 2:
                                exc[f[0]].extend(f[1:])
                self._exc[pos] = dict(exc)
            return self._exc[pos]

    def _load_frequencies(self) -> dict[tuple[str, str], int]:
        with self._lock:
            if self._freq is None:
                freq: dict[tuple[str, str], int] = defaultdict(int)
                path = self.root / "cntlist.rev"
                if path.is_file():
                    with open(path, encoding="utf-8", errors="replace") as fh:
                        for line in fh:
                            f = line.split()
                            if len(f) != 3:
                                continue
                            key, count = f[0], int(f[2])
                            lemma, _, rest = key.partition("%")
                            pos = _SENSE_KEY_POS.get(rest[:1])
                            if pos:
                                freq[(lemma.lower(), pos)] += count
                self._freq = dict(freq)
            return self._freq

    # ---------------------------------------------------------------- queries

    def has_lemma(self, lemma: str, pos: str) -> bool:
        return _key(lemma) in self._load_index(pos)

    def morphy(self, word: str, pos: str) -> list[str]:
        """Base forms of ``word`` that exist in WordNet for ``pos``."""
        index = self._load_index(pos)
        w = _key(word)
        found = []
        if w in index:
            found.append(w)
        for base in self._load_exceptions(pos).get(w, []):
            if base in index and base not in found:
                found.append(base)
        for suffix, repl in _SUFFIXES[pos]:
            if w.endswith(suffix) and len(w) > len(suffix):
                base = w[: len(w) - len(suffix)] + repl
                if base in index and base not in found:
                    found.append(base)
        return found

    def synsets(self, lemma: str, pos: str = "noun") -> list[Synset]:
        data = self._load_data(pos)
        offsets = self._load_index(pos).get(_key(lemma), [])
        return [data[o] for o in offsets if o in data]

    def pos_frequencies(self, word: str) -> dict[str, int]:
        """Tagged-sense counts per part of speech over all base forms of ``word``.

        Each base form that exists for a part of speech contributes at least 1,
        so unseen-in-SemCor lemmas still register their possible categories.
        """
        freq = self._load_frequencies()
        out = {}
        for pos in POS:
            bases = self.morphy(word, pos)
            if bases:
                out[pos] = sum(max(freq.get((b, pos), 0), 1) for b in bases)
        return out

    def min_depth(self, synset: Synset) -> int:
        """Length of the shortest hypernym path from ``synset`` to a root."""
        data = self._load_data(synset.pos)
        if synset.offset in self._depth:
            return self._depth[synset.offset]
        # iterative DFS with memoization; the noun hierarchy is a DAG
        stack = [(synset.offset, False)]
        while stack:
            off, expanded = stack.pop()
            if off in self._depth:
                continue
            hyp = data[off].hypernyms
            if not hyp:
                self._depth[off] = 0
            elif expanded:
                self._depth[off] = 1 + min(self._depth[h] for h in hyp)
            else:
                stack.append((off, True))
                stack.extend((h, False) for h in hyp if h not in self._depth)
        return self._depth[synset.offset]

    def noun_lemmas(self, preserve_case: bool = True) -> list[str]:
        """Unique noun lemmas in database order, with spaces for underscores."""
        seen = {}
        for syn in self._load_data("noun").values():
            for w in syn.lemmas:
                text = w.replace("_", " ")
                if not preserve_case:
                    text = text.lower()
                seen.setdefault(text, None)
        return list(seen)


def _key(lemma: str) -> str:
    return lemma.strip().lower().replace(" ", "_")


@lru_cache(maxsize=4)
def load_wordnet(root: str | None = None) -> WordNet:
    return WordNet(root)
