import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import loglik as oracle_loglik
from oracles import random_scale_instance, scale_oracle
from ldcstats.model_eval import (ConvergenceWarning, RepModel, ScaledModelCov, UndefinedScoreError, cosine_score,
                                 fit_scale_irls, log_likelihood, score_model, select_model, spearman_score)
from ldcstats.rdm import DimensionError, distances_from_patterns


class FixedCov:
    """Covariance that does not depend on the scale."""

    def __init__(self, V):
        self.B = np.asarray(V, dtype=float)
        self.A = np.zeros_like(self.B)

    def __call__(self, s):
        return self.B


def test_cosine_examples():
    d = np.array([0.2, 0.5, 0.1])
    assert math.isclose(cosine_score(3 * d, d), 1.0, rel_tol=1e-15)
    assert cosine_score([1.0, 0.0], [0.0, 2.0]) == 0.0
    assert math.isclose(cosine_score([1.0, 0.0], [1.0, 1.0]), 1 / math.sqrt(2), rel_tol=1e-15)
    with pytest.raises(UndefinedScoreError):
        cosine_score([1.0, 1.0], [0.0, 0.0])


@given(st.floats(1e-6, 1e6), st.integers(0, 2**32 - 1))
def test_cosine_scale_invariance(a, seed):
    r = np.random.default_rng(seed)
    m, d = r.uniform(0.1, 1, 6), r.standard_normal(6)
    assert math.isclose(cosine_score(a * m, d), cosine_score(m, d), rel_tol=1e-12, abs_tol=1e-15)


def test_spearman_examples():
    d = np.array([0.3, 0.1, 0.7, 0.5])
    assert math.isclose(spearman_score(np.exp(d), d), 1.0, rel_tol=1e-15)
    assert math.isclose(spearman_score(-d + 5, d), -1.0, rel_tol=1e-15)
    # average ranks (1.5, 1.5, 3) against (1, 2, 3)
    assert abs(spearman_score([1, 1, 2], [3, 5, 9]) - math.sqrt(3) / 2) < 1e-12
    with pytest.raises(UndefinedScoreError):
        spearman_score([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        spearman_score([1.0, 2.0], [1.0, 2.0, 3.0])


@given(st.integers(0, 2**32 - 1))
def test_spearman_monotone_invariance(seed):
    r = np.random.default_rng(seed)
    m, d = r.uniform(0.1, 2, 10), r.standard_normal(10)
    base = spearman_score(m, d)
    assert math.isclose(spearman_score(np.log(m) ** 3, d), base, rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(spearman_score(m, np.arctan(d)), base, rel_tol=1e-12, abs_tol=1e-15)


def test_loglik_one_distance():
    v, m, s = 0.3, np.array([2.0]), 1.5
    assert math.isclose(log_likelihood(m * s, m, s, np.array([[v]])), -0.5 * math.log(2 * math.pi * v), rel_tol=1e-14)


def test_loglik_quadratic_term(rng):
    V = np.diag([0.5, 1.0, 2.0])
    m = np.array([1.0, 0.5, 0.2])
    r = rng.standard_normal(3)
    at_mean = log_likelihood(m, m, 1.0, V)
    one = log_likelihood(m + r, m, 1.0, V) - at_mean
    two = log_likelihood(m + math.sqrt(2) * r, m, 1.0, V) - at_mean
    assert math.isclose(two, 2 * one, rel_tol=1e-12)


def _inv3(A):
    # cofactor expansion
    a, b, c = A[0]
    d, e, f = A[1]
    g, h, i = A[2]
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    adj = np.array([[e * i - f * h, c * h - b * i, b * f - c * e],
                    [f * g - d * i, a * i - c * g, c * d - a * f],
                    [d * h - e * g, b * g - a * h, a * e - b * d]])
    return adj / det, det


def test_loglik_explicit_inverse(rng):
    A = rng.standard_normal((3, 3))
    V = A @ A.T + 0.3 * np.eye(3)
    d, m, s = rng.standard_normal(3), rng.uniform(0, 1, 3), 0.7
    Vi, det = _inv3(V)
    r = d - s * m
    oracle = -1.5 * math.log(2 * math.pi) - 0.5 * math.log(det) - 0.5 * r @ Vi @ r
    assert math.isclose(log_likelihood(d, m, s, V), oracle, rel_tol=1e-10)


def test_loglik_callable_and_non_spd():
    with pytest.raises(np.linalg.LinAlgError):
        log_likelihood([1.0, 1.0], [1.0, 1.0], 1.0, np.array([[1.0, 2.0], [2.0, 1.0]]))
    cov = FixedCov(np.eye(2))
    assert log_likelihood([1.0, 1.0], [1.0, 1.0], 1.0, cov) == log_likelihood([1.0, 1.0], [1.0, 1.0], 1.0, np.eye(2))


def test_irls_fixed_covariance_is_gls(rng):
    A = rng.standard_normal((4, 4))
    V = A @ A.T + np.eye(4)
    m, d = rng.uniform(0.2, 1, 4), rng.uniform(0.2, 1, 4)
    Vi = np.linalg.inv(V)
    gls = (m @ Vi @ d) / (m @ Vi @ m)
    res = fit_scale_irls(d, m, None, None, 2, 1, cov=FixedCov(V))
    assert math.isclose(res.s_hat, gls, rel_tol=1e-10)
    assert res.converged


def test_irls_exact_match():
    m = np.array([0.4, 0.9, 0.1])
    res = fit_scale_irls(m, m, None, None, 2, 1, cov=FixedCov(np.eye(3)))
    assert math.isclose(res.s_hat, 1.0, rel_tol=1e-12)


def test_irls_against_likelihood_oracle():
    rng = np.random.default_rng(11)
    for _ in range(10):
        d, m, sk, tr, M, P = random_scale_instance(rng)
        res = fit_scale_irls(d, m, sk, tr, M, P)
        assert res.converged
        assert abs(res.s_hat - scale_oracle(d, m, sk, tr, M, P)) < 1e-3
        assert math.isclose(res.value, oracle_loglik(d, m, res.s_hat, sk, tr, M, P), rel_tol=1e-9, abs_tol=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_fitted_scale_is_local_maximum(seed):
    d, m, sk, tr, M, P = random_scale_instance(np.random.default_rng(seed))
    res = fit_scale_irls(d, m, sk, tr, M, P)
    if not res.converged or res.s_hat == 0.0:
        return
    cov = ScaledModelCov(m, sk, tr, M, P)
    for s in (0.99 * res.s_hat, 1.01 * res.s_hat):
        assert log_likelihood(d, m, s, cov) <= res.value + 1e-9


def test_irls_reports_non_convergence(rng):
    d, m, sk, tr, M, P = random_scale_instance(rng)
    with pytest.warns(ConvergenceWarning):
        res = fit_scale_irls(d, m, sk, tr, M, P, max_iter=1)
    assert not res.converged


def test_scaled_cov_shape_check():
    with pytest.raises(DimensionError):
        ScaledModelCov(np.ones(3), np.eye(4), 10.0, 3, 10)


def test_rep_model_validation():
    with pytest.raises(ValueError):
        RepModel([1.0, -0.1, 0.5])
    with pytest.raises(ValueError):
        RepModel([0.0, 0.0, 0.0])


def test_select_model_ties_and_errors():
    d = np.array([0.3, 0.1, 0.2])
    same = [RepModel([1.0, 0.5, 0.2], "a"), RepModel([1.0, 0.5, 0.2], "b")]
    for method in ("cosine", "spearman"):
        sel = select_model(d, same, method)
        assert sel.tie and sel.winner == 0
    with pytest.raises(ValueError):
        select_model(d, [], "cosine")
    with pytest.raises(ValueError):
        score_model(d, same[0], "loglik")
    with pytest.raises(ValueError):
        score_model(d, same[0], "pearson")


@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1), st.sampled_from(["cosine", "spearman"]))
def test_winner_invariant_to_common_rescaling(a, seed, method):
    r = np.random.default_rng(seed)
    d = r.standard_normal(6)
    ms = [r.uniform(0.1, 1, 6) for _ in range(3)]
    w1 = select_model(d, [RepModel(m) for m in ms], method).winner
    w2 = select_model(d, [RepModel(a * m) for m in ms], method).winner
    assert w1 == w2


def test_true_model_wins_at_high_signal():
    rng = np.random.default_rng(3)
    K, M, P = 5, 5, 50
    X = rng.standard_normal((K, 2))
    true = distances_from_patterns(X)
    other = distances_from_patterns(rng.standard_normal((K, 4)))
    models = [RepModel(true / true.mean()), RepModel(other / other.mean())]
    U_true = np.sqrt(P) * np.hstack([X, np.zeros((K, P - 2))]) * np.sqrt(1.0 / np.mean(true))
    wins = {"spearman": 0, "cosine": 0, "loglik": 0}
    n = 1000
    for _ in range(n):
        U = U_true + rng.standard_normal((M, K, P))
        from ldcstats.crossnobis import crossnobis_distances, estimate_sigma_k
        d = crossnobis_distances(U)
        sk = estimate_sigma_k(U).sigma_K
        for method in wins:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                sel = select_model(d, models, method, sigma_k=sk, trace_RR=float(P), M=M, P=P)
            wins[method] += sel.winner == 0 and not sel.tie
    for method, count in wins.items():
        assert count / n > 0.95, method
