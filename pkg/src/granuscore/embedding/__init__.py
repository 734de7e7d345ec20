"""Embedding backends and the geometry all features are built on."""

from .geometry import (
    EmbeddingVector,
    SpaceDescriptor,
    SpaceKind,
    cosine_cdist,
    cosine_similarity,
    dist0,
    dist0_array,
    distance,
    euclidean_cdist,
    flat_distance,
    hyperbolic_distance,
    mobius_add,
    poincare_cdist,
)
from .providers import (
    HIT_MODEL_ID,
    MINILM_MODEL_ID,
    CachedProvider,
    EmbeddingProvider,
    MissingTextError,
    SentenceTransformerProvider,
    TableProvider,
    embed_batch,
    load_table,
    normalize_text,
    resolve_provider,
    save_table,
)
