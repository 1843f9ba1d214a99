"""Unit-vector primitives: normalization, cosine similarity, centroids.

Embeddings are stored as float32; every reduction (dot products, means)
is accumulated in float64 so results are permutation-stable to ~1e-6.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DIM = 512

UNIT_NORM_TOL = 1e-5
DEGENERATE_NORM = 1e-6


class EmbeddingError(ValueError):
    """Raised for degenerate or non-finite vector inputs."""


def normalize(v) -> np.ndarray:
    """Scale ``v`` to unit L2 norm, preserving direction.

    Raises EmbeddingError for non-finite components ("non-finite input")
    or a (near-)zero vector ("degenerate embedding").
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise EmbeddingError(f"expected 1-d vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise EmbeddingError("non-finite input")
    norm = float(np.linalg.norm(arr))
    if norm < DEGENERATE_NORM:
        raise EmbeddingError("degenerate embedding: zero norm")
    return (arr / norm).astype(np.float32)


def is_unit(v, tol: float = UNIT_NORM_TOL) -> bool:
    norm = float(np.linalg.norm(np.asarray(v, dtype=np.float64)))
    return abs(norm - 1.0) <= tol


def cosine(a, b) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1]."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise EmbeddingError(f"dimension mismatch: {av.shape} vs {bv.shape}")
    return clamp_similarity(float(av @ bv))


def clamp_similarity(value: float) -> float:
    if value > 1.0:
        return 1.0
    if value < -1.0:
        return -1.0
    return value


def centroid(members) -> np.ndarray:
    """Renormalized arithmetic mean of unit vectors.

    Deterministic and permutation-invariant (float64 accumulation). Raises
    EmbeddingError on an empty list or a near-zero mean ("degenerate
    centroid", e.g. two antipodal members).
    """
    mat = np.asarray(members, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.shape[0] == 0:
        raise EmbeddingError("centroid of empty member list")
    mean = mat.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < DEGENERATE_NORM:
        raise EmbeddingError("degenerate centroid")
    return (mean / norm).astype(np.float32)


def as_matrix(rows, dim: int | None = None) -> np.ndarray:
    """Stack embeddings into a C-contiguous float32 (n, d) matrix."""
    mat = np.ascontiguousarray(np.asarray(rows, dtype=np.float32))
    if mat.ndim != 2:
        raise EmbeddingError(f"expected 2-d matrix, got shape {mat.shape}")
    if dim is not None and mat.shape[1] != dim:
        raise EmbeddingError(f"dimension mismatch: {mat.shape[1]} != {dim}")
    return mat
