"""Comparing representational models against estimated distances."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .crossnobis import xi_from_sigma_k
from .rdm import DimensionError, build_contrast_matrix, delta_from_distances, n_conditions

METHODS = ("spearman", "cosine", "loglik")
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
SCALE_FLOOR = 1e-6


class UndefinedScoreError(ValueError):
    pass


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RepModel:
    m: np.ndarray
    name: str = "model"

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).ravel()
        if np.any(m < 0):
            raise ValueError(f"model {self.name!r} predicts negative distances")
        if not np.any(m > 0):
            raise ValueError(f"model {self.name!r} predicts all-zero distances")
        object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class ModelScore:
    method: str
    value: float
    s_hat: float | None = None
    iterations: int = 0
    converged: bool = True


def _vector(x) -> np.ndarray:
    return x.m if isinstance(x, RepModel) else np.asarray(x, dtype=float).ravel()


def cosine_score(m, d_hat) -> float:
    m, d_hat = _vector(m), _vector(d_hat)
    denom = math.sqrt(float(m @ m) * float(d_hat @ d_hat))
    if denom == 0:
        raise UndefinedScoreError("cosine undefined for a zero-norm vector")
    return float(m @ d_hat) / denom


def spearman_score(m, d_hat) -> float:
    """Pearson correlation between average ranks."""
    m, d_hat = _vector(m), _vector(d_hat)
    if m.size != d_hat.size or m.size < 2:
        raise DimensionError("need two vectors of equal length >= 2")
    a = rankdata(m)
    b = rankdata(d_hat)
    a -= a.mean()
    b -= b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0:
        raise UndefinedScoreError("rank correlation undefined for a constant vector")
    return float(a @ b) / denom


class ScaledModelCov:
    """``V(s) = s A + B``: the predicted covariance when the true distances are ``s m``."""

    def __init__(self, m, sigma_k, trace_RR, M: int, P: int):
        m = _vector(m)
        sigma_k = np.asarray(sigma_k, dtype=float)
        K = n_conditions(m.size)
        if sigma_k.shape != (K, K):
            raise DimensionError(f"sigma_k must be {K}x{K}")
        C = build_contrast_matrix(K)
        xi = xi_from_sigma_k(sigma_k, C)
        factor = float(getattr(trace_RR, "trace_RR", trace_RR)) / P**2
        self.A = 4.0 * delta_from_distances(m, C) * xi / M * factor
        self.B = 2.0 * xi * xi / (M * (M - 1)) * factor

    def __call__(self, s: float) -> np.ndarray:
        return s * self.A + self.B


def _cholesky(V):
    try:
        return np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(V) / V.shape[0]
        try:
            return np.linalg.cholesky(V + jitter * np.eye(V.shape[0]))
        except np.linalg.LinAlgError as err:
            raise np.linalg.LinAlgError("covariance is not positive definite") from err


def log_likelihood(d_hat, model, s: float, V) -> float:
    """Gaussian log-density of the estimates given mean ``s m`` and covariance V."""
    d_hat = _vector(d_hat)
    m = _vector(model)
    V = V(s) if callable(V) else getattr(V, "V", V)
    V = np.asarray(V, dtype=float)
    L = _cholesky(V)
    r = np.linalg.solve(L, d_hat - s * m)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * d_hat.size * math.log(2 * math.pi) - 0.5 * logdet - 0.5 * r @ r)


def _gls_scale(m, d, V):
    L = _cholesky(V)
    mw = np.linalg.solve(L, m)
    dw = np.linalg.solve(L, d)
    return float(mw @ dw) / float(mw @ mw)


def _score_terms(m, d, s, cov: ScaledModelCov):
    """Gradient and curvature of the log-likelihood in s (observed and expected)."""
    V = cov(s)
    Vi = np.linalg.inv(_cholesky(V))
    Vi = Vi.T @ Vi
    r = d - s * m
    Vir, Vim = Vi @ r, Vi @ m
    ViA = Vi @ cov.A
    grad = float(m @ Vir) + 0.5 * float(Vir @ cov.A @ Vir) - 0.5 * float(np.trace(ViA))
    fisher = float(m @ Vim) + 0.5 * float(np.sum(ViA * ViA.T))
    hess = (0.5 * float(np.sum(ViA * ViA.T)) - float(m @ Vim) - 2.0 * float(Vim @ cov.A @ Vir)
            - float(Vir @ cov.A @ (ViA @ Vir)))
    return grad, fisher, hess


def fit_scale_irls(d_hat, model, sigma_k, trace_RR, M: int, P: int, tol: float = IRLS_TOL,
                   max_iter: int = IRLS_MAX_ITER, exact: bool = True, cov: ScaledModelCov | None = None) -> ModelScore:
    """Maximum-likelihood scale for ``d = s m`` with signal-dependent covariance.

    Alternates the weighted least-squares update ``s = (m'V^-1 m)^-1 m'V^-1 d``
    with rebuilding ``V(s)`` until the scale stops moving, starting from the
    ordinary least-squares value and keeping ``s >= 0``. That fixed point
    ignores how ``log|V|`` and the weights change with s, so with
    ``exact=True`` the fit continues with safeguarded Newton steps on the full
    log-likelihood. ``value`` is the log-likelihood at the returned scale.
    """
    d = _vector(d_hat)
    m = _vector(model)
    if cov is None:
        cov = ScaledModelCov(m, sigma_k, trace_RR, M, P)
    s = max(SCALE_FLOOR, float(m @ d) / float(m @ m))
    iterations = 0
    converged = False
    while iterations < max_iter:
        iterations += 1
        s_new = max(0.0, _gls_scale(m, d, cov(s)))
        step = abs(s_new - s)
        s = s_new
        if step < tol * max(1.0, abs(s)):
            converged = True
            break

    if exact:
        converged = False
        loglik = log_likelihood(d, m, s, cov)
        for _ in range(max_iter):
            iterations += 1
            grad, fisher, hess = _score_terms(m, d, s, cov)
            if s <= 0.0 and grad <= 0.0:
                converged = True
                break
            curvature = -hess if hess < 0 else fisher
            step = grad / curvature
            trial = max(0.0, s + step)
            trial_ll = log_likelihood(d, m, trial, cov)
            halvings = 0
            while trial_ll < loglik and halvings < 40:
                step *= 0.5
                trial = max(0.0, s + step)
                trial_ll = log_likelihood(d, m, trial, cov)
                halvings += 1
            if trial_ll < loglik:
                # no ascent direction left at machine precision
                converged = True
                break
            moved = abs(trial - s)
            s, loglik = trial, trial_ll
            if moved < tol * max(1.0, abs(s)):
                converged = True
                break

    if not converged:
        warnings.warn(f"scale fit did not converge after {iterations} iterations", ConvergenceWarning, stacklevel=2)
    return ModelScore("loglik", log_likelihood(d, m, s, cov), s, iterations, converged)


@dataclass(frozen=True)
class Selection:
    winner: int
    scores: list = field(default_factory=list)
    tie: bool = False


def score_model(d_hat, model, method: str, sigma_k=None, trace_RR=None, M=None, P=None, **kw) -> ModelScore:
    if method == "cosine":
        return ModelScore("cosine", cosine_score(model, d_hat))
    if method == "spearman":
        return ModelScore("spearman", spearman_score(model, d_hat))
    if method == "loglik":
        if sigma_k is None or trace_RR is None or M is None or P is None:
            raise ValueError("loglik needs sigma_k, trace_RR, M and P")
        return fit_scale_irls(d_hat, model, sigma_k, trace_RR, M, P, **kw)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def select_model(d_hat, models: Sequence, method: str = "loglik", **cov_inputs) -> Selection:
    """Score every model and pick the highest; ties go to the lowest index and are flagged."""
    if len(models) == 0:
        raise ValueError("no models to compare")
    scores = [score_model(d_hat, mdl, method, **cov_inputs) for mdl in models]
    values = np.array([sc.value for sc in scores])
    best = int(np.argmax(values))
    tie = int(np.sum(values == values[best])) > 1
    return Selection(best, scores, tie)
