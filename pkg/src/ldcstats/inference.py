"""z-tests on linear contrasts of distance estimates under the normal approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np
from scipy.special import erfc

from .crossnobis import CovPrediction, predict_v_balanced, xi_from_sigma_k
from .rdm import DimensionError, build_contrast_matrix, delta_from_distances, n_conditions

_SQRT2 = math.sqrt(2.0)


class DegenerateContrastError(ValueError):
    pass


def normal_cdf(x: float) -> float:
    """Standard normal CDF through the complementary error function."""
    if math.isnan(x):
        return math.nan
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_sf(x: float) -> float:
    """Upper tail ``1 - Phi(x)`` without cancellation for large x."""
    if math.isnan(x):
        return math.nan
    return 0.5 * math.erfc(x / _SQRT2)


def upper_p(z) -> np.ndarray:
    """Vectorized one-sided p-values ``1 - Phi(z)``."""
    return 0.5 * erfc(np.asarray(z, dtype=float) / _SQRT2)


def normal_ppf(p: float) -> float:
    return NormalDist().inv_cdf(p)


@dataclass(frozen=True)
class NullSpec:
    """Hypothesis under which V is predicted.

    ``kind="zero"``: all true distances are zero (only the noise term remains).
    ``kind="equalized"``: the distances in ``pairs`` share a common true value,
    taken as the mean of their estimates; the others are plugged in from the
    estimates, clamped at zero.
    """

    kind: str = "zero"
    pairs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("zero", "equalized"):
            raise ValueError(f"unknown null kind {self.kind!r}")
        if self.kind == "equalized" and len(self.pairs) < 2:
            raise ValueError("equalized null needs at least two distance indices")


@dataclass(frozen=True)
class ContrastTest:
    c: np.ndarray
    z: float
    p_value: float
    V_used: CovPrediction | np.ndarray = field(repr=False)
    null_spec: NullSpec | None = None
    two_sided: bool = False


def z_test(d_hat, c, V, null_spec: NullSpec | None = None, two_sided: bool = False) -> ContrastTest:
    """``z = c'd / sqrt(c'Vc)`` with a one-sided (upper) p-value by default."""
    d_hat = np.asarray(d_hat, dtype=float)
    c = np.asarray(c, dtype=float)
    Vm = V.V if isinstance(V, CovPrediction) else np.asarray(V, dtype=float)
    if c.shape != d_hat.shape or Vm.shape != (d_hat.size, d_hat.size):
        raise DimensionError(f"shapes disagree: d {d_hat.shape}, c {c.shape}, V {Vm.shape}")
    var = float(c @ Vm @ c)
    if not var > 0:
        raise DegenerateContrastError(f"contrast variance c'Vc = {var:.3g} is not positive")
    z = float(c @ d_hat) / math.sqrt(var)
    p = 2.0 * normal_sf(abs(z)) if two_sided else normal_sf(z)
    return ContrastTest(c, z, p, V, null_spec, two_sided)


def pair_contrast(D: int, j: int, l: int | None = None) -> np.ndarray:
    """``e_j`` or ``e_j - e_l`` over D distances (0-based indices)."""
    c = np.zeros(D)
    c[j] = 1.0
    if l is not None:
        if l == j:
            raise DegenerateContrastError("difference contrast needs two distinct distances")
        c[l] = -1.0
    return c


def null_distances(d_hat, null_spec: NullSpec) -> np.ndarray:
    """Distances assumed true under the null, used to build Delta."""
    d_hat = np.asarray(d_hat, dtype=float)
    if null_spec.kind == "zero":
        return np.zeros_like(d_hat)
    idx = list(null_spec.pairs)
    if any(not 0 <= j < d_hat.size for j in idx):
        raise IndexError(f"pair indices {idx} out of range for D={d_hat.size}")
    d = np.maximum(d_hat, 0.0)
    d[idx] = max(float(np.mean(d_hat[idx])), 0.0)
    return d


def null_v(d_hat, null_spec: NullSpec, sigma_k, trace_RR, M: int, P: int) -> CovPrediction:
    """Predicted covariance of the estimates under the given null hypothesis."""
    d_hat = np.asarray(d_hat, dtype=float)
    sigma_k = np.asarray(sigma_k, dtype=float)
    K = n_conditions(d_hat.size)
    if sigma_k.shape != (K, K):
        raise DimensionError(f"sigma_k must be {K}x{K}")
    C = build_contrast_matrix(K)
    xi = xi_from_sigma_k(sigma_k, C)
    if null_spec.kind == "zero":
        delta = np.zeros_like(xi)
    else:
        delta = delta_from_distances(null_distances(d_hat, null_spec), C)
    return predict_v_balanced(delta, xi, trace_RR, M, P)


def plugin_v(d_hat, sigma_k, trace_RR, M: int, P: int) -> CovPrediction:
    """V with the (non-negative part of the) estimates taken as true distances."""
    d = np.maximum(np.asarray(d_hat, dtype=float), 0.0)
    sigma_k = np.asarray(sigma_k, dtype=float)
    C = build_contrast_matrix(sigma_k.shape[0])
    return predict_v_balanced(delta_from_distances(d, C), xi_from_sigma_k(sigma_k, C), trace_RR, M, P)
