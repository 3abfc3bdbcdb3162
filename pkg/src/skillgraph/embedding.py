"""State feature vectors and cosine-similarity classification.

The encoder that produces feature vectors is abstracted away: anything that
hands the graph a fixed-dimension nonzero vector works, which lets the
synthetic world supply purpose-built embeddings with controlled geometry.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation

DEFAULT_DIMENSION = 64


class Embedding:
    """A fixed-length, nonzero feature vector (float64).

    Values are stored raw; normalization happens inside :func:`cosine`.
    """

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise ContractViolation(f"embedding must be a 1-d vector, got shape {arr.shape}")
        if arr.shape[0] == 0:
            raise ContractViolation("embedding must not be empty")
        if not np.all(np.isfinite(arr)):
            raise ContractViolation("embedding contains non-finite values")
        if not np.any(arr):
            raise ContractViolation("embedding must not be the all-zero vector")
        self.values = arr
        self.values.setflags(write=False)

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    def tolist(self) -> list[float]:
        return self.values.tolist()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Embedding) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"Embedding(dim={self.dimension})"


def cosine(a: Embedding, b: Embedding) -> float:
    """Cosine similarity of two embeddings, in [-1, 1]."""
    if a.dimension != b.dimension:
        raise ContractViolation(
            f"dimension mismatch: {a.dimension} vs {b.dimension}"
        )
    num = float(np.dot(a.values, b.values))
    den = float(np.linalg.norm(a.values) * np.linalg.norm(b.values))
    # Nonzero vectors guaranteed by the Embedding constructor.
    sim = num / den
    # Guard against float drift just outside [-1, 1].
    return max(-1.0, min(1.0, sim))


@dataclass(frozen=True)
class SimilarityThresholds:
    """Merge and link thresholds on cosine similarity.

    ``merge_threshold`` must be strictly greater than ``link_threshold`` so
    every similarity value falls in exactly one class.
    """

    merge_threshold: float = 0.95
    link_threshold: float = 0.88

    def __post_init__(self):
        if not (0.0 < self.merge_threshold <= 1.0):
            raise ContractViolation("merge_threshold must be in (0, 1]")
        if not (0.0 < self.link_threshold < 1.0):
            raise ContractViolation("link_threshold must be in (0, 1)")
        if not self.merge_threshold > self.link_threshold:
            raise ContractViolation("merge_threshold must exceed link_threshold")


class SimilarityClass(Enum):
    MERGE = "merge"
    SIMILAR_EDGE = "similar_edge"
    UNRELATED = "unrelated"


def classify(sim: float, thresholds: SimilarityThresholds) -> SimilarityClass:
    """Classify a similarity value against the two thresholds.

    Boundary values go downward: sim equal to the merge threshold is a
    similarity edge, sim equal to the link threshold is unrelated.
    """
    if not (-1.0 <= sim <= 1.0):
        raise ContractViolation(f"similarity {sim} outside [-1, 1]")
    if sim > thresholds.merge_threshold:
        return SimilarityClass.MERGE
    if sim > thresholds.link_threshold:
        return SimilarityClass.SIMILAR_EDGE
    return SimilarityClass.UNRELATED


def stack(embeddings: Iterable[Embedding]) -> np.ndarray:
    """Row-stack embeddings into a matrix (for vectorized similarity scans)."""
    return np.vstack([e.values for e in embeddings])
