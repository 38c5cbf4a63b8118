"""Spatial noise covariance, shrinkage and prewhitening of activity estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rdm import DimensionError

DEFAULT_SHRINKAGE = 0.4
SINGULAR_EPS = 1e-10


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


def estimate_sigma_p(residuals: Sequence[np.ndarray], K: int, Q: int = 1) -> np.ndarray:
    """Pooled voxel-by-voxel noise covariance from first-level residuals.

    Each run contributes ``R_m' R_m``; the sum is divided by the total residual
    degrees of freedom ``sum_m (T_m - K - Q)``, which reduces to
    ``M (T_m - K - Q)`` for runs of equal length.
    """
    if len(residuals) == 0:
        raise DimensionError("no residuals given")
    P = residuals[0].shape[1]
    acc = np.zeros((P, P))
    dof = 0
    for R in residuals:
        R = np.asarray(R, dtype=float)
        if R.ndim != 2 or R.shape[1] != P:
            raise DimensionError("all residual matrices need the same number of columns")
        run_dof = R.shape[0] - K - Q
        if run_dof <= 0:
            raise DimensionError(f"non-positive residual dof {run_dof} (T={R.shape[0]}, K={K}, Q={Q})")
        acc += R.T @ R
        dof += run_dof
    acc /= dof
    return 0.5 * (acc + acc.T)


def shrink(sigma_hat, h: float = DEFAULT_SHRINKAGE) -> np.ndarray:
    """Blend a covariance estimate with its own diagonal: ``h diag(S) + (1 - h) S``."""
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"shrinkage h must lie in [0, 1], got {h}")
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    out = (1.0 - h) * sigma_hat
    out[np.diag_indices_from(out)] = np.diag(sigma_hat)
    return out


def inv_sqrt(A, eps: float = SINGULAR_EPS) -> np.ndarray:
    """Symmetric inverse square root via eigendecomposition."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got {A.shape}")
    lam, vec = np.linalg.eigh(0.5 * (A + A.T))
    if lam[-1] <= 0 or lam[0] <= eps * lam[-1]:
        raise SingularCovarianceError(
            f"matrix is singular or nearly so (eigenvalue range [{lam[0]:.3g}, {lam[-1]:.3g}])")
    W = (vec / np.sqrt(lam)) @ vec.T
    return 0.5 * (W + W.T)


@dataclass(frozen=True)
class SpatialCov:
    sigma_hat: np.ndarray = field(repr=False)
    sigma_reg: np.ndarray = field(repr=False)
    h: float
    whitener: np.ndarray = field(repr=False)


def fit_spatial_cov(sigma_hat, h: float = DEFAULT_SHRINKAGE) -> SpatialCov:
    """Regularize a sample covariance and compute its whitening matrix."""
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    diag = np.diag(sigma_hat)
    if np.any(diag <= 0):
        bad = np.flatnonzero(diag <= 0)
        raise SingularCovarianceError(f"{bad.size} channel(s) with zero residual variance, e.g. {bad[:5].tolist()}")
    sigma_reg = shrink(sigma_hat, h)
    return SpatialCov(sigma_hat, sigma_reg, h, inv_sqrt(sigma_reg))


def prewhiten_patterns(B_hat, whitener) -> np.ndarray:
    """Right-multiply K x P estimates by the whitener."""
    B_hat = np.asarray(B_hat, dtype=float)
    whitener = np.asarray(whitener, dtype=float)
    if B_hat.shape[-1] != whitener.shape[0]:
        raise DimensionError(f"patterns have {B_hat.shape[-1]} channels, whitener is {whitener.shape}")
    return B_hat @ whitener


@dataclass(frozen=True)
class ResidualSpatialCov:
    """Channel covariance left after prewhitening and ``tr(S_R S_R)``.

    With ``normalized=True`` the matrix is rescaled to mean variance one
    (trace P). That is the scale at which the voxel-averaged condition
    covariance is estimated, and it makes ``trace_RR >= P``.
    """

    sigma_R: np.ndarray = field(repr=False)
    trace_RR: float
    normalized: bool = True

    @property
    def P(self) -> int:
        return self.sigma_R.shape[0]

    @classmethod
    def identity(cls, P: int) -> "ResidualSpatialCov":
        return cls(np.eye(P), float(P))


def estimate_sigma_r(sigma_p, sigma_reg=None, *, whitener=None,
                     normalize: bool = True) -> ResidualSpatialCov:
    """Residual spatial covariance ``W S_P W`` with ``W = sigma_reg^(-1/2)``."""
    sigma_p = np.asarray(sigma_p, dtype=float)
    if whitener is None:
        if sigma_reg is None:
            raise ValueError("need sigma_reg or whitener")
        whitener = inv_sqrt(sigma_reg)
    if sigma_p.shape != whitener.shape:
        raise DimensionError(f"shape mismatch {sigma_p.shape} vs {whitener.shape}")
    R = whitener @ sigma_p @ whitener
    R = 0.5 * (R + R.T)
    if normalize:
        R *= R.shape[0] / np.trace(R)
    # tr(R R) = sum of squared entries for symmetric R
    return ResidualSpatialCov(R, float(np.sum(R * R)), normalize)


def split_sigma_r(residuals: Sequence[np.ndarray], K: int, Q: int = 1,
                  h: float = DEFAULT_SHRINKAGE, spatial: SpatialCov | None = None) -> ResidualSpatialCov:
    """Data-only surrogate for the residual covariance.

    The noise covariance is re-estimated from the odd-numbered runs (first,
    third, ...) and whitened with the regularized estimate from all runs.
    """
    if spatial is None:
        spatial = fit_spatial_cov(estimate_sigma_p(residuals, K, Q), h)
    held = estimate_sigma_p(residuals[::2], K, Q)
    return estimate_sigma_r(held, whitener=spatial.whitener)
