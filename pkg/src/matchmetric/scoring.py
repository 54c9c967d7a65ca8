"""Cosine similarity of the enhanced pair and the final alignment score."""

from __future__ import annotations

import numpy as np

from .enhancement import EnhancedPair

ZERO_NORM_TOLERANCE = 1e-12


class DegenerateEmbeddingError(ValueError):
    """An enhanced embedding collapsed to (near) zero norm.

    A zero vector means the model is broken; silently scoring it as 0
    would corrupt any downstream correlation study, so this is an error.
    """


def cosine(e_t: np.ndarray, e_c: np.ndarray) -> float:
    """Cosine similarity, clamped into [-1, 1] against float overshoot."""
    norm_t = float(np.linalg.norm(e_t))
    norm_c = float(np.linalg.norm(e_c))
    if norm_t <= ZERO_NORM_TOLERANCE or norm_c <= ZERO_NORM_TOLERANCE:
        raise DegenerateEmbeddingError(
            f"cannot score embeddings with norms {norm_t:.3e} and {norm_c:.3e}"
        )
    value = float(np.dot(e_t, e_c)) / (norm_t * norm_c)
    return min(1.0, max(-1.0, value))


def cosine_backward(e_t: np.ndarray, e_c: np.ndarray, d_score: float):
    """Gradients of ``d_score * cosine(e_t, e_c)`` w.r.t. both vectors."""
    norm_t = float(np.linalg.norm(e_t))
    norm_c = float(np.linalg.norm(e_c))
    if norm_t <= ZERO_NORM_TOLERANCE or norm_c <= ZERO_NORM_TOLERANCE:
        raise DegenerateEmbeddingError("cannot differentiate a zero-norm cosine")
    raw = float(np.dot(e_t, e_c)) / (norm_t * norm_c)
    if abs(raw) > 1.0:
        # Clamp active: the score is locally constant.
        return np.zeros_like(e_t), np.zeros_like(e_c)
    d_t = d_score * (e_c / (norm_t * norm_c) - raw * e_t / (norm_t * norm_t))
    d_c = d_score * (e_t / (norm_t * norm_c) - raw * e_c / (norm_c * norm_c))
    return d_t, d_c


def match_score(enhanced: EnhancedPair) -> float:
    """Final alignment score f(t, c) = cosine of the enhanced embeddings."""
    return cosine(enhanced.e_t, enhanced.e_c)


def rescale_sim(score: float) -> float:
    """Map a score from [-1, 1] onto [0, 1]: sim = (1 + f) / 2."""
    return (1.0 + score) / 2.0
