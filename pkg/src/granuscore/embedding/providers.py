"""Embedding backends.

Every backend maps a batch of strings to a ``(n, dimension)`` array in one
declared space. :func:`embed_batch` wraps the raw call with input
validation and the ball-membership check.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from ..errors import ArchiveError, BackendError, DataError, GeometryError
from .geometry import EmbeddingVector, SpaceDescriptor, check_in_ball

logger = logging.getLogger(__name__)

HIT_MODEL_ID = "Hierarchy-Transformers/HiT-MiniLM-L12-WordNetNoun"
MINILM_MODEL_ID = "sentence-transformers/all-MiniLM-L6-v2"

TABLE_FORMAT = "granuscore-embedding-table"
TABLE_VERSION = 1


class MissingTextError(BackendError):
    """The text is not present in a lookup-table backend."""

    retriable = False


class EmbeddingProvider(ABC):
    """Deterministic text -> vector map in a fixed space."""

    model_id: str
    space: SpaceDescriptor

    @abstractmethod
    def _embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return a float array of shape ``(len(texts), space.dimension)``."""

    def embed_array(self, texts: Sequence[str]) -> np.ndarray:
        texts = _validate_texts(texts)
        out = np.asarray(self._embed(texts))
        if out.shape != (len(texts), self.space.dimension):
            raise BackendError(
                f"{self.model_id} returned shape {out.shape}, expected "
                f"{(len(texts), self.space.dimension)}"
            )
        if self.space.is_hyperbolic:
            inside = check_in_ball(out, self.space.curvature)
            if not inside.all():
                bad = texts[int(np.flatnonzero(~inside)[0])]
                raise GeometryError(f"embedding of {bad!r} lies on or outside the Poincaré ball")
        return out


def _validate_texts(texts) -> list[str]:
    if isinstance(texts, str):
        raise TypeError("embed_batch expects a list of strings, not a single string")
    texts = list(texts)
    if not texts:
        raise DataError("cannot embed an empty batch")
    for i, t in enumerate(texts):
        if not isinstance(t, str) or not t.strip():
            raise DataError(f"text {i} is empty after trimming")
    return texts


def embed_batch(texts: Sequence[str], provider: EmbeddingProvider) -> list[EmbeddingVector]:
    arr = provider.embed_array(texts)
    return [EmbeddingVector(row, provider.space, provider.model_id) for row in arr]


def normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip())


class TableProvider(EmbeddingProvider):
    """Lookup-table backend over precomputed vectors.

    Lookups are exact on the whitespace-normalized text. Vectors are kept in
    their stored dtype so repeated lookups are bitwise identical.
    """

    def __init__(self, mapping: Mapping[str, np.ndarray], model_id: str, space: SpaceDescriptor):
        self.model_id = model_id
        self.space = space
        texts = list(mapping)
        if texts:
            self._vectors = np.stack([np.asarray(mapping[t]) for t in texts])
        else:
            self._vectors = np.zeros((0, space.dimension), dtype=np.float32)
        if self._vectors.shape[1:] != (space.dimension,):
            raise DataError(f"table vectors have shape {self._vectors.shape[1:]}, expected ({space.dimension},)")
        self._texts = texts
        self._row = {}
        for i, t in enumerate(texts):
            key = normalize_text(t)
            if key in self._row:
                raise DataError(f"duplicate table entry {t!r}")
            self._row[key] = i

    def __len__(self):
        return len(self._texts)

    def __contains__(self, text):
        return normalize_text(text) in self._row

    @property
    def texts(self) -> list[str]:
        return list(self._texts)

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def _embed(self, texts):
        rows = []
        for t in texts:
            try:
                rows.append(self._row[normalize_text(t)])
            except KeyError:
                raise MissingTextError(f"{t!r} is not in embedding table {self.model_id!r}") from None
        return self._vectors[rows]

    def save(self, path) -> None:
        save_table(path, self._texts, self._vectors, self.model_id, self.space)

    @classmethod
    def load(cls, path) -> "TableProvider":
        texts, vectors, model_id, space = load_table(path)
        return cls(dict(zip(texts, vectors)), model_id, space)


def save_table(path, texts: Sequence[str], vectors: np.ndarray, model_id: str, space: SpaceDescriptor) -> None:
    """Write a precomputed-embedding table as a single ``.npz`` file."""
    vectors = np.asarray(vectors, dtype=np.float32)
    header = {
        "format": TABLE_FORMAT,
        "version": TABLE_VERSION,
        "model_id": model_id,
        **space.to_dict(),
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header, sort_keys=True)),
            texts=np.array(list(texts), dtype=np.str_),
            vectors=vectors,
        )


def load_table(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            texts = [str(t) for t in z["texts"]]
            vectors = z["vectors"]
    except (KeyError, ValueError, OSError) as exc:
        raise ArchiveError(f"cannot read embedding table {path}: {exc}") from exc
    if header.get("format") != TABLE_FORMAT:
        raise ArchiveError(f"{path} is not an embedding table")
    if header.get("version", 0) > TABLE_VERSION:
        raise ArchiveError(
            f"{path} uses table format version {header['version']}; this release reads up to {TABLE_VERSION}"
        )
    space = SpaceDescriptor.from_dict(header)
    if vectors.shape != (len(texts), space.dimension):
        raise ArchiveError(f"{path}: vector block shape {vectors.shape} does not match header")
    return texts, vectors, header["model_id"], space


class SentenceTransformerProvider(EmbeddingProvider):
    """Neural backend built on ``sentence-transformers``.

    For hierarchy models the ball curvature is taken, in order, from the
    ``curvature`` argument, from a ``manifold.c`` attribute when the model
    object exposes one, and finally from the circumscribing-ball convention
    ``c = 1 / dimension`` used by hierarchy transformer encoders.
    """

    def __init__(
        self,
        model_name_or_path: str,
        hyperbolic: bool,
        curvature: float | None = None,
        model_id: str | None = None,
        device: str | None = None,
        batch_size: int = 256,
    ):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover - depends on the environment
            raise BackendError(
                "sentence-transformers is required for neural backends: pip install 'granuscore[neural]'"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name_or_path, device=device)
        except Exception as exc:
            raise BackendError(f"could not load embedding model {model_name_or_path!r}: {exc}") from exc
        self.model_id = model_id or model_name_or_path
        self.batch_size = batch_size
        dim = int(self._model.get_sentence_embedding_dimension())
        if hyperbolic:
            if curvature is None:
                manifold = getattr(self._model, "manifold", None)
                curvature = float(getattr(manifold, "c", 0.0) or 0.0) or 1.0 / dim
            self.space = SpaceDescriptor.ball(dim, curvature)
        else:
            self.space = SpaceDescriptor.flat(dim)
        self._lock = threading.Lock()

    def _embed(self, texts):
        # Inference is serialized: torch modules are not documented as re-entrant.
        with self._lock:
            try:
                out = self._model.encode(
                    list(texts),
                    batch_size=self.batch_size,
                    convert_to_numpy=True,
                    normalize_embeddings=False,
                    show_progress_bar=False,
                )
            except Exception as exc:
                raise BackendError(f"{self.model_id} failed to embed a batch: {exc}") from exc
        return np.asarray(out, dtype=np.float32)


class CachedProvider(EmbeddingProvider):
    """Memoizes another backend on ``(model_id, normalized text)``."""

    def __init__(self, inner: EmbeddingProvider, max_batch: int = 4096):
        self.inner = inner
        self.model_id = inner.model_id
        self.space = inner.space
        self.max_batch = max_batch
        self._cache: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._cache)

    def _embed(self, texts):
        keys = [(self.model_id, normalize_text(t)) for t in texts]
        with self._lock:
            missing = list(dict.fromkeys(k for k in keys if k not in self._cache))
        for start in range(0, len(missing), self.max_batch):
            chunk = missing[start : start + self.max_batch]
            vecs = self.inner.embed_array([k[1] for k in chunk])
            with self._lock:
                for k, v in zip(chunk, vecs):
                    v = np.array(v)
                    v.setflags(write=False)
                    self._cache[k] = v
        with self._lock:
            return np.stack([self._cache[k] for k in keys])


def resolve_provider(spec: str, cache: bool = True, **kwargs) -> EmbeddingProvider:
    """Build a backend from a short identifier.

    ``hit`` and ``minilm`` name the two published encoders, ``table:PATH``
    loads a precomputed table, ``st:PATH`` a flat sentence-transformers model
    and ``st-ball:PATH`` a hierarchy model.
    """
    if spec.startswith("table:"):
        return TableProvider.load(spec[len("table:"):])
    if spec == "hit":
        path = os.environ.get("GRANUSCORE_HIT_MODEL", HIT_MODEL_ID)
        provider = SentenceTransformerProvider(path, hyperbolic=True, model_id=HIT_MODEL_ID, **kwargs)
    elif spec == "minilm":
        path = os.environ.get("GRANUSCORE_MINILM_MODEL", MINILM_MODEL_ID)
        provider = SentenceTransformerProvider(path, hyperbolic=False, model_id=MINILM_MODEL_ID, **kwargs)
    elif spec.startswith("st:"):
        provider = SentenceTransformerProvider(spec[3:], hyperbolic=False, **kwargs)
    elif spec.startswith("st-ball:"):
        provider = SentenceTransformerProvider(spec[len("st-ball:"):], hyperbolic=True, **kwargs)
    elif Path(spec).suffix == ".npz":
        return TableProvider.load(spec)
    else:
        raise ValueError(f"unknown embedding backend {spec!r}")
    return CachedProvider(provider) if cache else provider
