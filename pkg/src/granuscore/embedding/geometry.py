"""Geometry on the Poincaré ball and on flat space.

All computations are carried out in float64 regardless of the storage dtype
of the embeddings, because ``artanh`` loses most of its precision near the
ball boundary in single precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import GeometryError, SpaceMismatchError, UndefinedSimilarityError

# Points with sqrt(c)*||x|| above this are treated as being on the boundary.
_BOUNDARY = 1.0 - 1e-15


class SpaceKind(str, Enum):
    HYPERBOLIC_BALL = "hyperbolic_ball"
    FLAT = "flat"


@dataclass(frozen=True)
class SpaceDescriptor:
    kind: SpaceKind
    dimension: int
    curvature: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SpaceKind(self.kind))
        if int(self.dimension) < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        object.__setattr__(self, "dimension", int(self.dimension))
        if self.kind is SpaceKind.HYPERBOLIC_BALL:
            c = 1.0 if self.curvature is None else float(self.curvature)
            if not c > 0:
                raise ValueError(f"curvature must be > 0 for a Poincaré ball, got {self.curvature}")
            object.__setattr__(self, "curvature", c)
        else:
            object.__setattr__(self, "curvature", None)

    @property
    def is_hyperbolic(self) -> bool:
        return self.kind is SpaceKind.HYPERBOLIC_BALL

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "dimension": self.dimension, "curvature": self.curvature}

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceDescriptor":
        return cls(kind=d["kind"], dimension=d["dimension"], curvature=d.get("curvature"))

    @classmethod
    def ball(cls, dimension: int, curvature: float = 1.0) -> "SpaceDescriptor":
        return cls(SpaceKind.HYPERBOLIC_BALL, dimension, curvature)

    @classmethod
    def flat(cls, dimension: int) -> "SpaceDescriptor":
        return cls(SpaceKind.FLAT, dimension)


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    components: np.ndarray
    space: SpaceDescriptor
    model_id: str = ""

    def __post_init__(self):
        comp = np.asarray(self.components)
        if comp.ndim != 1 or comp.shape[0] != self.space.dimension:
            raise GeometryError(
                f"expected a vector of length {self.space.dimension}, got shape {comp.shape}"
            )
        comp = comp.copy()
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (
            self.space == other.space
            and self.model_id == other.model_id
            and self.components.dtype == other.components.dtype
            and np.array_equal(self.components, other.components)
        )

    __hash__ = None

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components.astype(np.float64)))


def check_in_ball(points: np.ndarray, curvature: float) -> np.ndarray:
    """Return the boolean mask of rows lying strictly inside the ball."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return math.sqrt(curvature) * np.linalg.norm(pts, axis=1) < _BOUNDARY


def _require_same_space(u: EmbeddingVector, v: EmbeddingVector) -> None:
    if u.space != v.space:
        raise SpaceMismatchError(f"cannot compare points from {u.space} and {v.space}")


# --------------------------------------------------------------------------
# vector-level API


def dist0(v: EmbeddingVector, radial: str = "hyperbolic") -> float:
    """Distance of ``v`` from the origin.

    ``radial="euclidean"`` returns the plain Euclidean norm even in a ball,
    which some hierarchy models use as their depth signal instead.
    """
    if not v.space.is_hyperbolic or radial == "euclidean":
        return v.norm
    return float(dist0_array(v.components[None, :], v.space.curvature)[0])


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    if u.space.dimension != v.space.dimension:
        raise SpaceMismatchError(
            f"dimension mismatch: {u.space.dimension} vs {v.space.dimension}"
        )
    a = u.components.astype(np.float64)
    b = v.components.astype(np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def mobius_add(x: np.ndarray, y: np.ndarray, curvature: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    c = curvature
    xy = np.sum(x * y, axis=-1, keepdims=True)
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    y2 = np.sum(y * y, axis=-1, keepdims=True)
    num = (1 + 2 * c * xy + c * y2) * x + (1 - c * x2) * y
    den = 1 + 2 * c * xy + c * c * x2 * y2
    return num / den


def hyperbolic_distance(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Poincaré distance between two points of the same ball."""
    _require_same_space(u, v)
    if not u.space.is_hyperbolic:
        raise SpaceMismatchError("hyperbolic_distance needs points in a Poincaré ball")
    d = poincare_cdist(u.components[None, :], v.components[None, :], u.space.curvature)
    return float(d[0, 0])


def flat_distance(u: EmbeddingVector, v: EmbeddingVector) -> float:
    _require_same_space(u, v)
    return float(np.linalg.norm(u.components.astype(np.float64) - v.components.astype(np.float64)))


def distance(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Geodesic distance in whichever space the points live in."""
    _require_same_space(u, v)
    if u.space.is_hyperbolic:
        return hyperbolic_distance(u, v)
    return flat_distance(u, v)


# --------------------------------------------------------------------------
# batched kernels used by feature extraction


def dist0_array(points: np.ndarray, curvature: float) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    sc = math.sqrt(curvature)
    r = sc * np.linalg.norm(pts, axis=1)
    bad = ~(r < _BOUNDARY)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise GeometryError(
            f"point {i} has sqrt(c)*||x|| = {r[i]:.17g} >= 1 and is not inside the ball"
        )
    return (2.0 / sc) * np.arctanh(r)


def _sq_dists(a: np.ndarray, b: np.ndarray, aa: np.ndarray, bb: np.ndarray, ab: np.ndarray):
    sq = aa + bb - 2.0 * ab
    np.maximum(sq, 0.0, out=sq)
    # The Gram-matrix form cancels catastrophically for nearby points; redo those exactly.
    close = sq <= 1e-6 * (aa + bb)
    if close.any():
        ii, jj = np.nonzero(close)
        diff = a[ii] - b[jj]
        sq[ii, jj] = np.einsum("ij,ij->i", diff, diff)
    return sq


def poincare_cdist(a: np.ndarray, b: np.ndarray, curvature: float) -> np.ndarray:
    """All-pairs Poincaré distances between the rows of ``a`` and ``b``.

    Uses ``||(-a) (+)_c b|| = ||a - b|| / sqrt(1 - 2c<a,b> + c^2 |a|^2 |b|^2)``
    so the only O(n*m*d) work is one matrix product.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    c = float(curvature)
    aa = np.einsum("ij,ij->i", a, a)[:, None]
    bb = np.einsum("ij,ij->i", b, b)[None, :]
    if (c * aa >= _BOUNDARY**2).any() or (c * bb >= _BOUNDARY**2).any():
        raise GeometryError("input contains points on or outside the Poincaré ball")
    ab = a @ b.T
    sq = _sq_dists(a, b, aa, bb, ab)
    den = 1.0 - 2.0 * c * ab + c * c * aa * bb
    sc = math.sqrt(c)
    arg = np.sqrt(c * sq / den)
    np.minimum(arg, _BOUNDARY, out=arg)
    return (2.0 / sc) * np.arctanh(arg)


def euclidean_cdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    aa = np.einsum("ij,ij->i", a, a)[:, None]
    bb = np.einsum("ij,ij->i", b, b)[None, :]
    return np.sqrt(_sq_dists(a, b, aa, bb, a @ b.T))


def cosine_cdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs cosine similarity (not distance)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if (na == 0).any() or (nb == 0).any():
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    sims = (a / na[:, None]) @ (b / nb[:, None]).T
    return np.clip(sims, -1.0, 1.0)
