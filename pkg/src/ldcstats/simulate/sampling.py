"""Random pattern and time-series generators used as Monte-Carlo ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..glm import NotPositiveDefiniteError
from ..rdm import DimensionError, squareform, vectorize

JITTER = 1e-10
AUX_KEY = 2**32 - 1


def replication_rng(base_seed: int, replication: int) -> np.random.Generator:
    """Independent stream for one replication, keyed by ``(base_seed, replication)``.

    Streams depend only on the pair, so any split of the replications across
    workers reproduces the serial run exactly.
    """
    return np.random.default_rng(np.random.SeedSequence(int(base_seed), spawn_key=(int(replication),)))


def auxiliary_rng(base_seed: int, tag: int = 0) -> np.random.Generator:
    """Stream for quantities fixed across replications (true patterns, model RDMs).

    Keys live in a range disjoint from replication indices.
    """
    return np.random.default_rng(np.random.SeedSequence(int(base_seed), spawn_key=(AUX_KEY, int(tag))))


def factor(S, name: str = "covariance") -> np.ndarray:
    """Lower Cholesky factor; retries once with a small diagonal jitter.

    An all-zero matrix gives a zero factor (the zero-variance limit).
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"{name} must be square, got {S.shape}")
    if not np.any(S):
        return np.zeros_like(S)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER * max(1.0, float(np.mean(np.diag(S))))
    try:
        return np.linalg.cholesky(S + jitter * np.eye(S.shape[0]))
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from err


def sample_matrix_normal(mean, sigma_K, sigma_R, rng, size: int | tuple | None = None,
                         row_factor=None, col_factor=None) -> np.ndarray:
    """Draw from MN(mean, sigma_K, sigma_R): ``mean + A Z B'`` with A A' = sigma_K, B B' = sigma_R.

    ``sigma_R=None`` means identity column covariance. ``size`` prepends
    replication axes.
    """
    mean = np.asarray(mean, dtype=float)
    K, P = mean.shape
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    A = factor(sigma_K, "row covariance") if row_factor is None else row_factor
    shape = (K, P) if size is None else tuple(np.atleast_1d(size)) + (K, P)
    Z = rng.standard_normal(shape)
    out = A @ Z
    if col_factor is not None or sigma_R is not None:
        B = factor(sigma_R, "column covariance") if col_factor is None else col_factor
        out = out @ B.T
    return mean + out


def true_patterns_from_rdm(target, P: int, rng, tol: float = 1e-10) -> np.ndarray:
    """K x P patterns whose per-channel squared distances equal ``target`` exactly.

    The centred second-moment matrix implied by the RDM is factored by
    eigendecomposition and rotated into P channels by a random orthonormal
    frame.
    """
    target = np.asarray(target, dtype=float)
    rdm = squareform(target) if target.ndim == 1 else target
    vectorize(rdm)  # validates symmetry and zero diagonal
    K = rdm.shape[0]
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    H = np.eye(K) - 1.0 / K
    G = -0.5 * H @ rdm @ H
    lam, vec = np.linalg.eigh(0.5 * (G + G.T))
    scale = max(1.0, float(np.abs(lam).max()))
    if lam.min() < -tol * scale:
        raise ValueError(f"RDM is not realizable (second-moment eigenvalue {lam.min():.3g} < 0)")
    keep = lam > tol * scale
    coords = vec[:, keep] * np.sqrt(lam[keep])
    r = coords.shape[1]
    if r == 0:
        return np.zeros((K, P))
    if r > P:
        raise DimensionError(f"RDM needs {r} dimensions but only P={P} channels")
    Q, _ = np.linalg.qr(rng.standard_normal((P, r)))
    return np.sqrt(P) * coords @ Q.T


@dataclass(frozen=True)
class RoiGrid:
    coords: np.ndarray = field(repr=False)
    voxel_mm: float = 2.0

    @property
    def P(self) -> int:
        return self.coords.shape[0]

    @property
    def distances(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))


def build_roi(radius_mm: float = 8.0, voxel_mm: float = 2.0) -> RoiGrid:
    """Voxel centres of a sphere, centred on a voxel, on a cubic lattice."""
    if radius_mm <= 0 or voxel_mm <= 0:
        raise ValueError("radius and voxel size must be positive")
    n = int(np.floor(radius_mm / voxel_mm))
    ax = np.arange(-n, n + 1)
    grid = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    # integer test avoids rounding at the boundary
    inside = np.sum(grid * grid, axis=1) * voxel_mm**2 <= radius_mm**2 + 1e-9
    coords = grid[inside] * float(voxel_mm)
    if coords.shape[0] == 0:
        raise ValueError("ROI contains no voxels")
    return RoiGrid(coords, float(voxel_mm))


def spatial_cov_from_grid(grid: RoiGrid, s_eps: float) -> np.ndarray:
    """Channel correlation ``exp(-|p_i - p_j|^2 / s_eps^2)``; identity as s_eps -> 0."""
    if s_eps < 0:
        raise ValueError("kernel width must be non-negative")
    if s_eps == 0:
        return np.eye(grid.P)
    dist = grid.distances
    return np.exp(-(dist * dist) / s_eps**2)
