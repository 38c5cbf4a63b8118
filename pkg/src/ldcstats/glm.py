"""First-level design matrices and generalized least-squares pattern estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.stats import gamma

OVERSAMPLING = 16


class DesignError(ValueError):
    pass


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class HRF:
    """Difference of two gamma densities (SPM-style canonical shape).

    ``peak`` and ``undershoot`` are the gamma shape parameters in seconds with
    unit dispersion. The sampled kernel is scaled to unit sum, so a sustained
    boxcar plateaus at 1.
    """

    peak: float = 6.0
    undershoot: float = 16.0
    dispersion: float = 1.0
    ratio: float = 1.0 / 6.0
    length: float = 32.0

    def kernel(self, dt: float) -> np.ndarray:
        t = np.arange(0.0, self.length + dt / 2, dt)
        h = gamma.pdf(t, self.peak / self.dispersion, scale=self.dispersion)
        h = h - self.ratio * gamma.pdf(t, self.undershoot / self.dispersion, scale=self.dispersion)
        return h / h.sum()


IDENTITY_HRF = "identity"


@dataclass(frozen=True)
class DesignMatrix:
    """T x (K + Q) design: K condition columns followed by Q nuisance columns."""

    entries: np.ndarray = field(repr=False)
    n_conditions: int
    sampling_interval: float = 1.0
    conditions: tuple[int, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.entries, dtype=float)
        if X.ndim != 2:
            raise DesignError(f"design matrix must be 2-D, got shape {X.shape}")
        object.__setattr__(self, "entries", X)
        if not 0 < self.n_conditions <= X.shape[1]:
            raise DesignError("n_conditions must be between 1 and the column count")
        if self.conditions is None:
            object.__setattr__(self, "conditions", tuple(range(self.n_conditions)))
        elif len(self.conditions) != self.n_conditions:
            raise DesignError("conditions labels must match n_conditions")

    @property
    def T(self) -> int:
        return self.entries.shape[0]

    @property
    def Q(self) -> int:
        return self.entries.shape[1] - self.n_conditions

    @property
    def condition_cols(self) -> np.ndarray:
        return self.entries[:, : self.n_conditions]

    @property
    def nuisance_cols(self) -> np.ndarray:
        return self.entries[:, self.n_conditions :]


def build_design(onsets: Sequence[Sequence[float]], durations, T: int, dt: float,
                 hrf: HRF | str | None = None, intercept: bool = True,
                 check_rank: bool = True) -> DesignMatrix:
    """Boxcar regressors convolved with an HRF, one column per condition.

    Parameters
    ----------
    onsets : sequence of sequences
        Trial onset times in seconds, one inner sequence per condition.
    durations : float or sequence
        Trial duration in seconds; a scalar, one value per condition, or a
        nested sequence matching ``onsets``.
    T : int
        Number of samples in the run.
    dt : float
        Sampling interval in seconds.
    hrf : HRF or "identity", optional
        Response kernel. Defaults to the canonical :class:`HRF`.
    intercept : bool
        Append a column of ones.
    """
    if T < 1 or dt <= 0:
        raise DesignError("T must be positive and dt > 0")
    hrf = HRF() if hrf is None else hrf
    K = len(onsets)
    if K == 0:
        raise DesignError("no conditions given")
    fine_dt = dt / OVERSAMPLING
    n_fine = T * OVERSAMPLING
    run_end = T * dt
    if hrf == IDENTITY_HRF:
        kernel = np.ones(1)
    else:
        kernel = hrf.kernel(fine_dt)

    cols = np.zeros((T, K))
    for c, cond_onsets in enumerate(onsets):
        if len(cond_onsets) == 0:
            raise DesignError(f"condition {c} has no trials")
        durs = _durations_for(durations, c, len(cond_onsets))
        boxcar = np.zeros(n_fine)
        for onset, dur in zip(cond_onsets, durs):
            if not 0 <= onset < run_end:
                raise DesignError(f"onset {onset} s of condition {c} outside run [0, {run_end})")
            if dur < 0:
                raise DesignError("durations must be non-negative")
            start = int(round(onset / fine_dt))
            stop = min(n_fine, int(round((onset + dur) / fine_dt)))
            boxcar[start:stop] = 1.0
        conv = np.convolve(boxcar, kernel)[:n_fine]
        cols[:, c] = conv[::OVERSAMPLING]

    X = np.hstack([cols, np.ones((T, 1))]) if intercept else cols
    if check_rank:
        _require_full_rank(X)
    return DesignMatrix(X, K, dt)


def _durations_for(durations, c, n):
    if np.isscalar(durations):
        return [float(durations)] * n
    item = durations[c]
    if np.isscalar(item):
        return [float(item)] * n
    if len(item) != n:
        raise DesignError(f"condition {c}: {n} onsets but {len(item)} durations")
    return [float(x) for x in item]


def _require_full_rank(X):
    if np.any(np.all(X == 0, axis=0)):
        raise DesignError("design has an all-zero column (rank deficient)")
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise DesignError(f"design matrix is rank deficient ({rank} < {X.shape[1]})")


def blocked_design(order: Sequence[int], trial_duration: float, T: int, dt: float,
                   n_conditions: int | None = None, start: float = 0.0, gap: float = 0.0,
                   hrf: HRF | str | None = None) -> DesignMatrix:
    """Design for back-to-back trials presented in ``order`` (condition labels)."""
    K = n_conditions if n_conditions is not None else max(order) + 1
    onsets: list[list[float]] = [[] for _ in range(K)]
    t = start
    for cond in order:
        onsets[cond].append(t)
        t += trial_duration + gap
    return build_design(onsets, trial_duration, T, dt, hrf=hrf)


@dataclass(frozen=True)
class TemporalCovSpec:
    """Temporal noise correlation.

    ``kind`` is ``"identity"``, ``"double_exponential"`` (mixture weight ``w``,
    time constants ``tau1`` and ``tau2`` in samples) or ``"explicit"``.
    """

    kind: str = "double_exponential"
    w: float = 0.5
    tau1: float = 1.0
    tau2: float = 40.0
    matrix: np.ndarray | None = field(default=None, repr=False)


def temporal_cov(spec: TemporalCovSpec, T: int) -> np.ndarray:
    if T < 1:
        raise ValueError("T must be >= 1")
    if spec.kind == "identity":
        return np.eye(T)
    if spec.kind == "double_exponential":
        lag = np.abs(np.subtract.outer(np.arange(T), np.arange(T))).astype(float)
        return spec.w * np.exp(-lag / spec.tau1) + (1 - spec.w) * np.exp(-lag / spec.tau2)
    if spec.kind == "explicit":
        S = np.asarray(spec.matrix, dtype=float)
        if S.shape != (T, T):
            raise ValueError(f"explicit temporal covariance must be {T}x{T}, got {S.shape}")
        check_spd(S, "temporal covariance")
        return S
    raise ValueError(f"unknown temporal covariance kind {spec.kind!r}")


def check_spd(A, name="matrix"):
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from err


@dataclass(frozen=True)
class GlmFit:
    betas: np.ndarray
    residuals: np.ndarray
    dof: int


class GlsProjector:
    """Precomputed GLS map ``(X' S^-1 X)^-1 X' S^-1`` for a fixed design.

    Reused across simulated replications where only the data change.
    """

    def __init__(self, X, sigma_t=None):
        X = X.entries if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)
        T, ncol = X.shape
        if np.linalg.matrix_rank(X) < ncol:
            raise DesignError("design matrix is rank deficient")
        if sigma_t is None:
            Xw = X
            self._chol = None
        else:
            sigma_t = np.asarray(sigma_t, dtype=float)
            if sigma_t.shape != (T, T):
                raise DesignError(f"temporal covariance must be {T}x{T}")
            L = check_spd(sigma_t, "temporal covariance")
            self._chol = L
            Xw = scipy.linalg.solve_triangular(L, X, lower=True)
        self.X = X
        # XtSX^-1 X' S^-1 = (Xw' Xw)^-1 Xw' L^-1
        q, r = np.linalg.qr(Xw)
        r_inv = scipy.linalg.solve_triangular(r, np.eye(ncol))
        # (X' S^-1 X)^-1, the per-channel covariance of the betas for unit noise
        self.cov_unscaled = r_inv @ r_inv.T
        G = r_inv @ q.T
        if self._chol is not None:
            G = scipy.linalg.solve_triangular(self._chol, G.T, lower=True, trans="T").T
        self.G = G

    def fit(self, Y) -> GlmFit:
        Y = np.asarray(Y, dtype=float)
        if Y.shape[0] != self.X.shape[0]:
            raise DesignError(f"data has {Y.shape[0]} samples, design has {self.X.shape[0]}")
        betas = self.G @ Y
        resid = Y - self.X @ betas
        return GlmFit(betas, resid, self.X.shape[0] - self.X.shape[1])


def gls_fit(Y, X: DesignMatrix | np.ndarray, sigma_t=None) -> GlmFit:
    """GLS estimate ``(X' S^-1 X)^-1 X' S^-1 Y`` using a Cholesky whitening of ``S``."""
    return GlsProjector(X, sigma_t).fit(Y)
