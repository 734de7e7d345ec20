"""Reference entity index and anchor-comparison features.

An :class:`AnchorIndex` is a frozen, ordered set of labelled embeddings
(Wikidata titles in the default setup). An :class:`AnchorStrategy` decides
which ``k`` entries a query is compared against, and :class:`Featurizer`
turns query embeddings into the fixed-order feature matrix consumed by the
tree ensemble::

    [sim_0 .. sim_{k-1}, dist_0 .. dist_{k-1}, dist0]
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .embedding.geometry import (
    EmbeddingVector,
    SpaceDescriptor,
    cosine_cdist,
    dist0_array,
    euclidean_cdist,
    poincare_cdist,
)
from .embedding.providers import EmbeddingProvider
from .errors import ArchiveError, ConfigurationError, DataError, SpaceMismatchError

logger = logging.getLogger(__name__)

INDEX_FORMAT = "granuscore-anchor-index"
INDEX_VERSION = 1
DEFAULT_K = 999
DEFAULT_INDEX_SIZE = 50_000


class AnchorKind(str, Enum):
    NEAREST_NEIGHBORS = "nearest_neighbors"
    RANDOM_DYNAMIC = "random_dynamic"
    RANDOM_FIXED = "random_fixed"
    RADIAL_BINNED = "radial_binned"


@dataclass(frozen=True)
class AnchorStrategy:
    kind: AnchorKind = AnchorKind.RANDOM_FIXED
    k: int = DEFAULT_K
    seed: int = 0
    bins: int = 10
    binning: str = "equal_count"

    def __post_init__(self):
        object.__setattr__(self, "kind", AnchorKind(self.kind))
        if self.k < 1:
            raise ConfigurationError(f"k must be positive, got {self.k}")
        if self.bins < 1:
            raise ConfigurationError(f"bins must be positive, got {self.bins}")
        if self.binning not in ("equal_count", "equal_width"):
            raise ConfigurationError(f"unknown binning {self.binning!r}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    @property
    def is_fixed(self) -> bool:
        return self.kind in (AnchorKind.RANDOM_FIXED, AnchorKind.RADIAL_BINNED)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "k": self.k, "seed": self.seed, "bins": self.bins, "binning": self.binning}

    @classmethod
    def from_dict(cls, d: dict) -> "AnchorStrategy":
        return cls(**d)


class AnchorIndex:
    """Immutable ordered collection of reference entities."""

    def __init__(
        self,
        labels: Sequence[str],
        vectors: np.ndarray,
        space: SpaceDescriptor,
        source_id: str = "",
        seed: int = 0,
        model_id: str = "",
    ):
        labels = [str(x) for x in labels]
        if len(set(labels)) != len(labels):
            raise DataError("anchor index labels must be unique")
        vectors = np.array(vectors)
        if vectors.shape != (len(labels), space.dimension):
            raise DataError(f"vectors have shape {vectors.shape}, expected {(len(labels), space.dimension)}")
        vectors.setflags(write=False)
        self._labels = tuple(labels)
        self._vectors = vectors
        self.space = space
        self.source_id = source_id
        self.seed = int(seed)
        self.model_id = model_id

    def __len__(self):
        return len(self._labels)

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def entry(self, i: int) -> tuple[str, EmbeddingVector]:
        return self._labels[i], EmbeddingVector(self._vectors[i], self.space, self.model_id)

    @cached_property
    def radii(self) -> np.ndarray:
        """Dist0 of every entry (Euclidean norm for flat spaces)."""
        if self.space.is_hyperbolic:
            return dist0_array(self._vectors, self.space.curvature)
        return np.linalg.norm(self._vectors.astype(np.float64), axis=1)

    @cached_property
    def _unit_vectors(self) -> np.ndarray:
        v = self._vectors.astype(np.float64)
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps([self.source_id, self.model_id, self.space.to_dict()]).encode())
        h.update("\x00".join(self._labels).encode())
        h.update(np.ascontiguousarray(self._vectors).tobytes())
        return h.hexdigest()[:16]

    def nearest(self, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Exact top-k cosine neighbours, ties broken by index position."""
        if k > len(self):
            raise ConfigurationError(f"k={k} exceeds index size {len(self)}")
        q = np.atleast_2d(np.asarray(query, dtype=np.float64))
        q = q / np.linalg.norm(q, axis=1, keepdims=True)
        sims = np.clip(q @ self._unit_vectors.T, -1.0, 1.0)
        n = sims.shape[1]
        idx = np.empty((q.shape[0], k), dtype=np.int64)
        for r in range(q.shape[0]):
            row = sims[r]
            if k < n:
                # keep everything tied with the k-th value so tie-breaking stays exact
                kth = np.partition(row, n - k)[n - k]
                cand = np.flatnonzero(row >= kth)
            else:
                cand = np.arange(n)
            order = np.lexsort((cand, -row[cand]))[:k]
            idx[r] = cand[order]
        return idx, np.take_along_axis(sims, idx, axis=1)

    # ------------------------------------------------------------------ io

    def save(self, target) -> None:
        """Write the index to a path or binary file object as one ``.npz`` archive."""
        header = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "space": self.space.to_dict(),
            "source_id": self.source_id,
            "seed": self.seed,
            "model_id": self.model_id,
        }
        arrays = dict(
            header=np.array(json.dumps(header, sort_keys=True)),
            labels=np.array(self._labels, dtype=np.str_),
            vectors=self._vectors,
        )
        if isinstance(target, (str, Path)):
            # np.savez appends ".npz" to bare paths; write through a handle to keep the name.
            with open(target, "wb") as fh:
                np.savez(fh, **arrays)
        else:
            np.savez(target, **arrays)

    @classmethod
    def load(cls, path) -> "AnchorIndex":
        try:
            with np.load(path, allow_pickle=False) as z:
                header = json.loads(str(z["header"]))
                labels = [str(x) for x in z["labels"]]
                vectors = z["vectors"]
        except (KeyError, ValueError, OSError, EOFError) as exc:
            raise ArchiveError(f"cannot read anchor index {path}: {exc}") from exc
        return cls._from_parts(header, labels, vectors, str(path))

    @classmethod
    def _from_parts(cls, header, labels, vectors, where="archive"):
        if header.get("format") != INDEX_FORMAT:
            raise ArchiveError(f"{where} is not an anchor index")
        if header.get("version", 0) > INDEX_VERSION:
            raise ArchiveError(
                f"{where} uses index format version {header['version']}; this release reads up to {INDEX_VERSION}"
            )
        return cls(
            labels,
            vectors,
            SpaceDescriptor.from_dict(header["space"]),
            source_id=header.get("source_id", ""),
            seed=header.get("seed", 0),
            model_id=header.get("model_id", ""),
        )

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "AnchorIndex":
        return cls.load(io.BytesIO(data))


def load_entity_titles(path, field: str = "title") -> list[str]:
    """Read entity titles from a JSON-lines file (or plain lines of text)."""
    titles = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    logger.warning("%s:%d: skipping malformed record (%s)", path, lineno, exc)
                    continue
                title = rec.get(field)
                if isinstance(title, dict):  # {"en": "..."} style multilingual labels
                    title = title.get("en")
                if not isinstance(title, str) or not title.strip():
                    logger.warning("%s:%d: record has no %r field", path, lineno, field)
                    continue
                titles.append(title.strip())
            else:
                titles.append(line)
    return titles


def build_index(
    labels: Sequence[str],
    provider: EmbeddingProvider,
    sample_size: int = DEFAULT_INDEX_SIZE,
    seed: int = 0,
    source_id: str = "",
    batch_size: int = 1024,
) -> AnchorIndex:
    """Sample ``sample_size`` distinct labels under ``seed`` and embed them.

    Duplicate labels met while walking the seeded permutation are skipped,
    which is the same as deduplicating a sample and topping it up.
    """
    labels = [str(x).strip() for x in labels]
    if not labels:
        raise ConfigurationError("cannot build an index from an empty label list")
    if sample_size < 1 or sample_size > len(labels):
        raise ConfigurationError(f"sample_size {sample_size} not in [1, {len(labels)}]")
    rng = np.random.default_rng(seed)
    chosen: list[str] = []
    seen: set[str] = set()
    for i in rng.permutation(len(labels)):
        lab = labels[i]
        if not lab or lab in seen:
            continue
        seen.add(lab)
        chosen.append(lab)
        if len(chosen) == sample_size:
            break
    if len(chosen) < sample_size:
        raise ConfigurationError(f"only {len(chosen)} distinct labels available, need {sample_size}")
    parts = [provider.embed_array(chosen[s : s + batch_size]) for s in range(0, len(chosen), batch_size)]
    return AnchorIndex(
        chosen, np.concatenate(parts), provider.space, source_id=source_id, seed=seed, model_id=provider.model_id
    )


# ---------------------------------------------------------------------- selection


@dataclass(frozen=True)
class Anchors:
    """An ordered selection of index rows."""

    index: AnchorIndex = field(repr=False)
    positions: np.ndarray

    def __len__(self):
        return len(self.positions)

    @property
    def labels(self) -> list[str]:
        return [self.index.labels[i] for i in self.positions]

    @property
    def vectors(self) -> np.ndarray:
        return self.index.vectors[self.positions]

    def __iter__(self):
        for i in self.positions:
            yield self.index.entry(int(i))


def _dynamic_rng(seed: int, ordinal: int) -> np.random.Generator:
    # Philox is counter-based: one independent key per (seed, call ordinal).
    key = np.array([seed, ordinal], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def radial_bins(radii: np.ndarray, bins: int, binning: str = "equal_count") -> list[np.ndarray]:
    """Partition index positions into Dist0 bins, shallowest first."""
    order = np.argsort(radii, kind="stable")
    if binning == "equal_count":
        return [b for b in np.array_split(order, bins)]
    edges = np.linspace(radii.min(), radii.max(), bins + 1)
    member = np.clip(np.searchsorted(edges, radii, side="right") - 1, 0, bins - 1)
    return [order[member[order] == b] for b in range(bins)]


def _radial_positions(index: AnchorIndex, strategy: AnchorStrategy) -> np.ndarray:
    groups = radial_bins(index.radii, strategy.bins, strategy.binning)
    per, rem = divmod(strategy.k, strategy.bins)
    counts = [per + (1 if b >= strategy.bins - rem else 0) for b in range(strategy.bins)]
    rng = np.random.default_rng(strategy.seed)
    picked = []
    for b, (members, want) in enumerate(zip(groups, counts)):
        if want > len(members):
            raise ConfigurationError(
                f"Dist0 bin {b} holds {len(members)} entries but {want} anchors were requested from it"
            )
        if want:
            picked.append(rng.choice(members, size=want, replace=False))
    return np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)


def select_anchors(
    index: AnchorIndex,
    strategy: AnchorStrategy,
    query: EmbeddingVector | None = None,
    ordinal: int | None = None,
) -> Anchors:
    """Pick the anchors one query is compared against.

    ``ordinal`` is the call number in the per-call seed stream of the
    ``random_dynamic`` strategy; it defaults to 0.
    """
    if strategy.k > len(index):
        raise ConfigurationError(f"k={strategy.k} exceeds index size {len(index)}")
    kind = strategy.kind
    if (kind is AnchorKind.NEAREST_NEIGHBORS) != (query is not None):
        raise ConfigurationError("a query is required for nearest_neighbors and only for it")
    if kind is AnchorKind.NEAREST_NEIGHBORS:
        if query.space != index.space:
            raise SpaceMismatchError(f"query space {query.space} differs from index space {index.space}")
        pos, _ = index.nearest(query.components, strategy.k)
        return Anchors(index, pos[0])
    if kind is AnchorKind.RANDOM_FIXED:
        rng = np.random.default_rng(strategy.seed)
        return Anchors(index, rng.choice(len(index), size=strategy.k, replace=False))
    if kind is AnchorKind.RADIAL_BINNED:
        return Anchors(index, _radial_positions(index, strategy))
    rng = _dynamic_rng(strategy.seed, 0 if ordinal is None else int(ordinal))
    return Anchors(index, rng.choice(len(index), size=strategy.k, replace=False))


# ---------------------------------------------------------------------- features


@dataclass(frozen=True, eq=False)
class AnchorFeatureVector:
    sims: np.ndarray
    dists: np.ndarray
    feature_order_id: str
    dist0: float | None = None

    def __post_init__(self):
        if len(self.sims) != len(self.dists):
            raise DataError("sims and dists must have the same length")

    def as_array(self) -> np.ndarray:
        parts = [np.asarray(self.sims, dtype=np.float64), np.asarray(self.dists, dtype=np.float64)]
        if self.dist0 is not None:
            parts.append(np.array([self.dist0], dtype=np.float64))
        return np.concatenate(parts)

    def __len__(self):
        return 2 * len(self.sims) + (self.dist0 is not None)


def _radius(points: np.ndarray, space: SpaceDescriptor, radial: str) -> np.ndarray:
    if space.is_hyperbolic and radial == "hyperbolic":
        return dist0_array(points, space.curvature)
    return np.linalg.norm(np.atleast_2d(points).astype(np.float64), axis=1)


def _pair_features(queries: np.ndarray, anchors: np.ndarray, space: SpaceDescriptor):
    sims = cosine_cdist(queries, anchors)
    if space.is_hyperbolic:
        dists = poincare_cdist(queries, anchors, space.curvature)
    else:
        dists = euclidean_cdist(queries, anchors)
    return sims, dists


def extract_features(
    query: EmbeddingVector,
    anchors: Anchors,
    include_dist0: bool = True,
    feature_order_id: str = "",
    radial: str = "hyperbolic",
) -> AnchorFeatureVector:
    if query.space != anchors.index.space:
        raise SpaceMismatchError(f"query space {query.space} differs from anchor space {anchors.index.space}")
    q = query.components[None, :]
    sims, dists = _pair_features(q, anchors.vectors, query.space)
    d0 = float(_radius(q, query.space, radial)[0]) if include_dist0 else None
    return AnchorFeatureVector(sims[0], dists[0], feature_order_id, d0)


@dataclass(frozen=True)
class FeatureConfig:
    """Which features a model consumes. ``strategy=None`` means Dist0 only."""

    strategy: AnchorStrategy | None = field(default_factory=AnchorStrategy)
    include_dist0: bool = True
    radial: str = "hyperbolic"

    def __post_init__(self):
        if self.strategy is None and not self.include_dist0:
            raise ConfigurationError("a feature configuration needs anchors, Dist0, or both")
        if self.radial not in ("hyperbolic", "euclidean"):
            raise ConfigurationError(f"unknown radial mode {self.radial!r}")

    def to_dict(self) -> dict:
        return {
            "strategy": None if self.strategy is None else self.strategy.to_dict(),
            "include_dist0": self.include_dist0,
            "radial": self.radial,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        strat = d.get("strategy")
        return cls(
            strategy=None if strat is None else AnchorStrategy.from_dict(strat),
            include_dist0=d.get("include_dist0", True),
            radial=d.get("radial", "hyperbolic"),
        )


class Featurizer:
    """Turns query embeddings into model-ready feature rows.

    For fixed strategies the anchors are drawn once here and never change,
    so the same query always yields the same row.
    """

    def __init__(self, config: FeatureConfig, index: AnchorIndex | None = None, space: SpaceDescriptor | None = None):
        self.config = config
        self.index = index
        if config.strategy is not None:
            if index is None:
                raise ConfigurationError("anchor features need an anchor index")
            if config.strategy.k > len(index):
                raise ConfigurationError(f"k={config.strategy.k} exceeds index size {len(index)}")
            space = index.space
        if space is None:
            raise ConfigurationError("Dist0-only features need a space descriptor")
        self.space = space
        self.anchors = None
        self.source = None if index is None else {"index_digest": index.digest, "index_source_id": index.source_id}
        if config.strategy is not None and config.strategy.is_fixed:
            self.anchors = select_anchors(index, config.strategy)

    @property
    def k(self) -> int:
        return 0 if self.config.strategy is None else self.config.strategy.k

    @property
    def width(self) -> int:
        return 2 * self.k + int(self.config.include_dist0)

    @property
    def feature_names(self) -> list[str]:
        k = self.k
        digits = max(3, len(str(max(k - 1, 0))))
        names = [f"sim_{i:0{digits}d}" for i in range(k)] + [f"dist_{i:0{digits}d}" for i in range(k)]
        if self.config.include_dist0:
            names.append("dist0")
        return names

    @cached_property
    def feature_order_id(self) -> str:
        desc = {"config": self.config.to_dict(), "space": self.space.to_dict()}
        strat = self.config.strategy
        if strat is not None:
            desc["index"] = self.index.digest
            if strat.kind is AnchorKind.NEAREST_NEIGHBORS:
                desc["order"] = "similarity-rank"
            elif strat.kind is AnchorKind.RANDOM_DYNAMIC:
                desc["order"] = "per-call-draw"
            else:
                desc["order"] = [int(i) for i in self.anchors.positions]
        blob = json.dumps(desc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def transform(self, queries: np.ndarray, ordinals: Sequence[int] | None = None, chunk: int = 2048) -> np.ndarray:
        """Feature matrix for a batch of query embeddings.

        ``ordinals`` feed the per-call seed stream of ``random_dynamic``;
        by default row ``i`` uses ordinal ``i``.
        """
        q = np.atleast_2d(np.asarray(queries))
        if q.shape[1] != self.space.dimension:
            raise SpaceMismatchError(f"queries have dimension {q.shape[1]}, expected {self.space.dimension}")
        n = q.shape[0]
        out = np.empty((n, self.width), dtype=np.float64)
        k = self.k
        if self.config.include_dist0:
            out[:, -1] = _radius(q, self.space, self.config.radial)
        strat = self.config.strategy
        if strat is None:
            return out
        if ordinals is None:
            ordinals = range(n)
        ordinals = list(ordinals)
        if len(ordinals) != n:
            raise DataError("need exactly one ordinal per query")
        for s in range(0, n, chunk):
            qs = q[s : s + chunk]
            if self.anchors is not None:
                sims, dists = _pair_features(qs, self.anchors.vectors, self.space)
            elif strat.kind is AnchorKind.NEAREST_NEIGHBORS:
                pos, sims = self.index.nearest(qs, k)
                dists = np.vstack([_pair_features(qs[r : r + 1], self.index.vectors[pos[r]], self.space)[1]
                                   for r in range(len(qs))])
            else:
                sims = np.empty((len(qs), k))
                dists = np.empty((len(qs), k))
                for r in range(len(qs)):
                    anchors = select_anchors(self.index, strat, ordinal=ordinals[s + r])
                    a_s, a_d = _pair_features(qs[r : r + 1], anchors.vectors, self.space)
                    sims[r], dists[r] = a_s[0], a_d[0]
            out[s : s + len(qs), :k] = sims
            out[s : s + len(qs), k : 2 * k] = dists
        return out

    def features(self, query: EmbeddingVector, ordinal: int = 0) -> AnchorFeatureVector:
        row = self.transform(query.components[None, :], [ordinal])[0]
        k = self.k
        d0 = float(row[-1]) if self.config.include_dist0 else None
        return AnchorFeatureVector(row[:k], row[k : 2 * k], self.feature_order_id, d0)

    def frozen_index(self) -> AnchorIndex:
        """A small index holding only the frozen anchors, in feature order."""
        if self.anchors is None:
            raise ConfigurationError("only fixed strategies have a frozen anchor set")
        return AnchorIndex(
            self.anchors.labels,
            self.anchors.vectors,
            self.space,
            source_id=self.index.source_id,
            seed=self.index.seed,
            model_id=self.index.model_id,
        )

    @classmethod
    def restore(
        cls,
        config: FeatureConfig,
        index: AnchorIndex | None,
        space: SpaceDescriptor,
        feature_order_id: str,
        frozen: bool,
        source: dict | None = None,
    ) -> "Featurizer":
        """Rebuild a featurizer from archived parts.

        With ``frozen=True`` the index is the output of :meth:`frozen_index`
        and its rows are used as the anchors directly, in stored order.
        ``source`` carries the digest and id of the index the anchors came from.
        """
        obj = cls.__new__(cls)
        obj.config = config
        obj.index = index
        obj.space = space
        obj.anchors = None
        obj.source = source
        if source is None and index is not None:
            obj.source = {"index_digest": index.digest, "index_source_id": index.source_id}
        if frozen:
            if index is None or len(index) != config.strategy.k:
                raise ArchiveError("frozen anchor set is missing or has the wrong size")
            obj.anchors = Anchors(index, np.arange(len(index)))
        elif config.strategy is not None and index is None:
            raise ArchiveError("anchor features need the full anchor index")
        obj.__dict__["feature_order_id"] = feature_order_id
        return obj
