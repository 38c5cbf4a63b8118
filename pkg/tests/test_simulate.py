import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldcstats.glm import TemporalCovSpec
from ldcstats.rdm import DimensionError, vectorize
from ldcstats.simulate import (ConfigError, TimeseriesSimSpec, TimeseriesSimulator, build_roi, replication_rng,
                               run_experiment, sample_matrix_normal, simulate_timeseries, spatial_cov_from_grid,
                               true_patterns_from_rdm)


def _rdm(U):
    diff = U[:, None, :] - U[None, :, :]
    return vectorize(np.sum(diff * diff, axis=-1) / U.shape[1])


# -- matrix normal -------------------------------------------------------------

def test_matrix_normal_zero_variance(rng):
    mean = rng.standard_normal((3, 4))
    out = sample_matrix_normal(mean, 0 * np.eye(3), 0 * np.eye(4), rng)
    assert np.array_equal(out, mean)


def test_matrix_normal_moments():
    rng = np.random.default_rng(5)
    mean = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, -1.0]])
    sk = np.array([[2.0, 0.6], [0.6, 1.0]])
    n = 10000
    X = sample_matrix_normal(mean, sk, None, rng, size=n)
    se = np.sqrt(np.diag(sk))[:, None] / math.sqrt(n)
    assert np.all(np.abs(X.mean(axis=0) - mean) < 3 * se)
    R = X - mean
    row_cov = np.einsum("nkp,nlp->kl", R, R) / (n * mean.shape[1])
    # per-entry SE of a Wishart average: sqrt((s_kl^2 + s_kk s_ll) / N)
    se_cov = np.sqrt((sk**2 + np.outer(np.diag(sk), np.diag(sk))) / (n * mean.shape[1]))
    assert np.all(np.abs(row_cov - sk) < 3 * se_cov)


def test_matrix_normal_rejects_non_spd(rng):
    with pytest.raises(np.linalg.LinAlgError):
        sample_matrix_normal(np.zeros((2, 2)), np.array([[1.0, 2.0], [2.0, 1.0]]), None, rng)


# -- true patterns --------------------------------------------------------------

def test_true_patterns_zero_target(rng):
    U = true_patterns_from_rdm(np.zeros(3), 10, rng)
    assert np.all(U == U[0])


@pytest.mark.parametrize("d23", [1.0, 2.0, 3.9])
def test_true_patterns_three_conditions(rng, d23):
    target = np.array([2.6, 1.4, d23])
    U = true_patterns_from_rdm(target, 50, rng)
    assert U.shape == (3, 50)
    assert np.max(np.abs(_rdm(U) - target)) < 1e-10


@pytest.mark.parametrize("level", [0.05, 0.1, 0.2, 1.0])
def test_true_patterns_five_conditions(rng, level):
    target = level * np.array([1.5, 1, 1, 1, 0.5, 0.5, 0.5, 0, 0, 0])
    U = true_patterns_from_rdm(target, 30, rng)
    assert np.max(np.abs(_rdm(U) - target)) < 1e-10


def test_true_patterns_non_realizable(rng):
    with pytest.raises(ValueError):
        true_patterns_from_rdm(np.array([1.0, 1.0, 9.0]), 10, rng)


@given(st.integers(3, 7), st.integers(0, 2**32 - 1))
def test_true_patterns_realize_any_euclidean_rdm(K, seed):
    r = np.random.default_rng(seed)
    target = _rdm(r.standard_normal((K, K + 2)))
    U = true_patterns_from_rdm(target, 40, r)
    assert np.max(np.abs(_rdm(U) - target)) < 1e-10 * max(1.0, target.max())


# -- ROI and spatial kernel -----------------------------------------------------

def _lattice_count(radius, voxel):
    n = int(radius // voxel) + 1
    return sum(1 for x, y, z in itertools.product(range(-n, n + 1), repeat=3)
               if (x * x + y * y + z * z) * voxel**2 <= radius**2)


@pytest.mark.parametrize("radius,voxel,expected", [(8, 2, 257), (4, 2, 33), (0.9, 2, 1)])
def test_build_roi_counts(radius, voxel, expected):
    assert build_roi(radius, voxel).P == expected
    assert _lattice_count(radius, voxel) == expected


def test_build_roi_errors():
    with pytest.raises(ValueError):
        build_roi(0, 2)


def test_spatial_kernel_values():
    grid = build_roi(4, 2)
    S = spatial_cov_from_grid(grid, 2.0)
    assert np.all(np.diag(S) == 1.0)
    dist = grid.distances
    i, j = np.argwhere(np.isclose(dist, 2.0))[0]
    assert math.isclose(S[i, j], math.exp(-1), rel_tol=1e-15)
    assert np.array_equal(spatial_cov_from_grid(grid, 0), np.eye(grid.P))


@pytest.mark.parametrize("s_eps", [1, 2, 3, 4, 5])
def test_spatial_kernel_spd_with_jitter(s_eps):
    S = spatial_cov_from_grid(build_roi(8, 2), s_eps)
    assert np.linalg.eigvalsh(S + 1e-10 * np.eye(S.shape[0])).min() > 0
    np.linalg.cholesky(S + 1e-10 * np.eye(S.shape[0]))


# -- time series ------------------------------------------------------------------

def test_zero_noise_is_design_times_betas():
    spec = TimeseriesSimSpec(K=3, M=2, T=40, trials_per_condition=1, trial_duration=4.0, radius_mm=4,
                             noise_var=0.0, signal=np.array([1.0, 2.0, 1.5]))
    sim = TimeseriesSimulator(spec)
    out = sim.simulate(replication_rng(0, 0))
    for m, Y in enumerate(out.Y):
        assert np.array_equal(Y, sim.designs[m].condition_cols @ out.B)


def test_temporal_autocorrelation():
    spec = TimeseriesSimSpec(K=2, M=1, T=4000, trials_per_condition=1, trial_duration=4.0, radius_mm=8, s_eps=0.0)
    E = simulate_timeseries(spec, 0, seed=2).Y[0]
    lag1 = np.mean(E[1:] * E[:-1])
    assert abs(lag1 - (0.5 * math.exp(-1) + 0.5 * math.exp(-1 / 40))) < 0.01


def test_spatial_correlation():
    spec = TimeseriesSimSpec(K=2, M=1, T=400, trials_per_condition=1, trial_duration=4.0, radius_mm=8, s_eps=3.0,
                             temporal=TemporalCovSpec("identity"))
    sim = TimeseriesSimulator(spec)
    E = sim.simulate(replication_rng(3, 0)).Y[0]
    i, j = np.nonzero(np.triu(np.isclose(sim.grid.distances, 2.0)))
    corr = np.mean(E[:, i] * E[:, j])
    assert abs(corr - math.exp(-4 / 9)) < 0.02


def test_timeseries_determinism():
    spec = TimeseriesSimSpec(K=3, M=2, T=40, trials_per_condition=1, trial_duration=4.0, radius_mm=4,
                             signal=np.array([1.0, 2.0, 1.5]))
    a, b = simulate_timeseries(spec, 7, seed=1), simulate_timeseries(spec, 7, seed=1)
    c = simulate_timeseries(spec, 8, seed=1)
    assert all(np.array_equal(x, y) for x, y in zip(a.Y, b.Y))
    assert not np.array_equal(a.Y[0], c.Y[0])


# -- experiments --------------------------------------------------------------------

def test_replication_streams_are_independent_of_split():
    a = replication_rng(9, 4).standard_normal(5)
    assert np.array_equal(a, replication_rng(9, 4).standard_normal(5))
    assert not np.array_equal(a, replication_rng(9, 5).standard_normal(5))


def test_experiment_determinism_and_shapes():
    cfg = {"replications": 50}
    a = run_experiment("fig1", cfg, seed=4)
    b = run_experiment("fig1", cfg, seed=4)
    for name in a.tables:
        assert np.array_equal(a.tables[name], b.tables[name])
    assert a.patterns.shape == (3, 3, 50)
    assert a.tables["V_pred"].shape == (3, 3)


def test_fig3_sweeps_kernel_and_shrinkage():
    res = run_experiment("fig3", {"replications": 2, "s_eps": [0, 3]}, seed=0)
    table = res.tables["variance"]
    assert sorted(set(table[:, 1])) == [0.2, 0.4, 0.6, 1.0]
    assert sorted(set(table[:, 0])) == [0.0, 3.0]


def test_experiment_config_errors():
    with pytest.raises(ConfigError):
        run_experiment("fig1", {"replications": 10, "bogus": 1})
    with pytest.raises(ConfigError):
        run_experiment("nope", {"replications": 10})
    with pytest.raises(ConfigError):
        run_experiment("fig1", {"replications": 10, "M": 1})
    with pytest.raises((ConfigError, DimensionError)):
        run_experiment("fig1", {"replications": 10, "distances": [1.0, 2.0]})
