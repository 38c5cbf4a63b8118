"""Condition-pair bookkeeping: contrast matrices, distance vectors and RDMs.

Pairs are always enumerated lexicographically, ``(0, 1), (0, 2), ..., (0, K-1),
(1, 2), ...``, and every other module relies on that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes or counts are inconsistent."""


@dataclass(frozen=True)
class Dimensions:
    """Problem size: conditions ``K``, channels ``P`` and partitions ``M``."""

    K: int
    P: int
    M: int

    def __post_init__(self):
        if self.K < 2:
            raise DimensionError(f"need at least 2 conditions, got K={self.K}")
        if self.P < 1:
            raise DimensionError(f"need at least 1 channel, got P={self.P}")
        if self.M < 2:
            raise DimensionError(f"cross-validation needs M >= 2 partitions, got M={self.M}")

    @property
    def D(self) -> int:
        return n_pairs(self.K)


def n_pairs(K: int) -> int:
    return K * (K - 1) // 2


def n_conditions(D: int) -> int:
    """Invert ``D = K(K-1)/2``; raises if ``D`` is not a triangular number."""
    if D < 1:
        raise DimensionError(f"pair count must be positive, got {D}")
    K = int(round((1 + math.sqrt(1 + 8 * D)) / 2))
    if n_pairs(K) != D:
        raise DimensionError(f"{D} is not K(K-1)/2 for any integer K")
    return K


@lru_cache(maxsize=64)
def pair_index(K: int) -> tuple[tuple[int, int], ...]:
    """Canonical list of condition pairs ``(i, k)`` with ``i < k``."""
    if K < 2:
        raise DimensionError(f"need at least 2 conditions, got K={K}")
    return tuple((i, k) for i in range(K) for k in range(i + 1, K))


@dataclass(frozen=True)
class ContrastMatrix:
    """D x K matrix with +1 at the first and -1 at the second condition of each pair."""

    entries: np.ndarray = field(repr=False)
    pairs: tuple[tuple[int, int], ...]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    @property
    def D(self) -> int:
        return self.entries.shape[0]

    def row(self, i: int, k: int) -> int:
        """Row number of the pair ``(i, k)`` (order of the two labels is ignored)."""
        if i == k:
            raise DimensionError("a pair needs two distinct conditions")
        i, k = min(i, k), max(i, k)
        return self.pairs.index((i, k))


def build_contrast_matrix(K: int) -> ContrastMatrix:
    pairs = pair_index(K)
    C = np.zeros((len(pairs), K))
    for j, (i, k) in enumerate(pairs):
        C[j, i] = 1.0
        C[j, k] = -1.0
    C.setflags(write=False)
    return ContrastMatrix(C, pairs)


def squareform(d) -> np.ndarray:
    """Expand a length-D distance vector into a symmetric K x K RDM."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 1:
        raise DimensionError(f"distance vector must be 1-D, got shape {d.shape}")
    K = n_conditions(d.size)
    rows, cols = np.triu_indices(K, k=1)
    out = np.zeros((K, K))
    out[rows, cols] = d
    out[cols, rows] = d
    return out


def vectorize(rdm) -> np.ndarray:
    """Inverse of :func:`squareform`: upper triangle in canonical pair order."""
    rdm = np.asarray(rdm, dtype=float)
    if rdm.ndim != 2 or rdm.shape[0] != rdm.shape[1]:
        raise DimensionError(f"RDM must be square, got shape {rdm.shape}")
    K = rdm.shape[0]
    if K < 2:
        raise DimensionError("RDM needs at least 2 conditions")
    if not np.array_equal(rdm, rdm.T):
        raise DimensionError("RDM is not symmetric")
    if np.any(np.diag(rdm) != 0):
        raise DimensionError("RDM diagonal must be zero")
    return rdm[np.triu_indices(K, k=1)].copy()


def delta_from_rdm(rdm, C: ContrastMatrix | None = None) -> np.ndarray:
    """Second moment of the true pattern differences, ``-C D C^T / 2``.

    The diagonal reproduces the distances themselves; off-diagonal entries are
    the (per-channel) inner products between pairs of pattern differences.
    """
    rdm = np.asarray(rdm, dtype=float)
    if C is None:
        C = build_contrast_matrix(rdm.shape[0])
    if rdm.shape != (C.K, C.K):
        raise DimensionError(f"RDM shape {rdm.shape} does not match K={C.K}")
    Cm = C.entries
    delta = -0.5 * Cm @ rdm @ Cm.T
    return 0.5 * (delta + delta.T)


def delta_from_distances(d, C: ContrastMatrix | None = None) -> np.ndarray:
    return delta_from_rdm(squareform(d), C)


def delta_from_patterns(U, C: ContrastMatrix | None = None) -> np.ndarray:
    """``C U U^T C^T / P`` for a K x P pattern matrix."""
    U = np.asarray(U, dtype=float)
    if C is None:
        C = build_contrast_matrix(U.shape[0])
    diffs = C.entries @ U
    return diffs @ diffs.T / U.shape[1]


def distances_from_patterns(U) -> np.ndarray:
    """Exact squared Euclidean distances per channel between the rows of ``U``."""
    U = np.asarray(U, dtype=float)
    C = build_contrast_matrix(U.shape[0])
    diffs = C.entries @ U
    return np.einsum("jp,jp->j", diffs, diffs) / U.shape[1]


def is_realizable(d, tol: float = 1e-10) -> bool:
    """True if the distances come from some set of real patterns (Delta is PSD)."""
    delta = delta_from_distances(d)
    lam = np.linalg.eigvalsh(delta)
    scale = max(1.0, float(np.max(np.abs(lam))))
    return bool(lam.min() >= -tol * scale)
