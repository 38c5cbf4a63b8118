import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldcstats.crossnobis import predict_v, xi_from_sigma_k
from ldcstats.inference import (DegenerateContrastError, NullSpec, normal_cdf, normal_ppf, normal_sf, null_distances,
                                null_v, pair_contrast, plugin_v, upper_p, z_test)
from ldcstats.rdm import DimensionError


def test_normal_cdf_examples():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(40.0) == 1.0
    assert math.isnan(normal_cdf(float("nan")))


@pytest.mark.parametrize("x", [-8.0, -3.2, -1.0, 0.3, 1.6448536269514722, 2.326, 5.5])
def test_normal_cdf_high_precision(x):
    mpmath.mp.dps = 40
    exact = float(mpmath.ncdf(x))
    assert abs(normal_cdf(x) - exact) < 1e-15
    tail = float(mpmath.ncdf(-x))
    assert abs(normal_sf(x) - tail) <= 1e-13 * tail


def test_ninety_fifth_percentile():
    assert abs(normal_cdf(1.6448536269514722) - 0.95) < 1e-10
    assert abs(normal_ppf(0.95) - 1.6448536269514722) < 1e-12


@given(st.floats(-30, 30))
def test_cdf_symmetry(x):
    assert abs(normal_cdf(x) + normal_cdf(-x) - 1.0) < 1e-12


def test_upper_p_matches_scalar():
    z = np.array([-2.0, 0.0, 1.5, 7.0])
    assert np.allclose(upper_p(z), [normal_sf(v) for v in z], rtol=1e-14)


def test_z_single_distance_diagonal_v():
    d = np.array([0.3, -0.1, 0.5])
    V = np.diag([0.04, 0.01, 0.09])
    res = z_test(d, pair_contrast(3, 2), V)
    assert math.isclose(res.z, 0.5 / 0.3, rel_tol=1e-14)
    assert math.isclose(res.p_value, normal_sf(0.5 / 0.3), rel_tol=1e-14)
    two = z_test(d, pair_contrast(3, 2), V, two_sided=True)
    assert math.isclose(two.p_value, 2 * res.p_value, rel_tol=1e-14)


def test_zero_contrast_rejected():
    with pytest.raises(DegenerateContrastError):
        z_test(np.ones(3), np.zeros(3), np.eye(3))
    with pytest.raises(DegenerateContrastError):
        pair_contrast(3, 1, 1)
    with pytest.raises(DimensionError):
        z_test(np.ones(3), np.ones(2), np.eye(3))


@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_z_scale_invariance(a, seed):
    r = np.random.default_rng(seed)
    d = r.standard_normal(3)
    A = r.standard_normal((3, 3))
    V = A @ A.T + 0.1 * np.eye(3)
    c = pair_contrast(3, 0, 2)
    z1 = z_test(d, c, V).z
    z2 = z_test(a * d, c, a * a * V).z
    assert math.isclose(z1, z2, rel_tol=1e-12)


def test_difference_contrast_uses_covariance():
    d = np.array([0.5, 0.2, 0.0])
    V = np.array([[0.04, 0.03, 0.0], [0.03, 0.05, 0.0], [0.0, 0.0, 0.02]])
    c = pair_contrast(3, 0, 1)
    res = z_test(d, c, V)
    assert math.isclose(res.z, 0.3 / math.sqrt(0.04 + 0.05 - 0.06), rel_tol=1e-14)
    ignored = z_test(d, c, np.diag(np.diag(V)))
    assert ignored.z != res.z


def test_zero_null_has_noise_term_only():
    d = np.array([0.5, 0.3, 0.2])
    sk = np.eye(3)
    V = null_v(d, NullSpec("zero"), sk, 20.0, 4, 20)
    xi = xi_from_sigma_k(sk)
    assert np.allclose(V.V, 2 * xi * xi / 12 * 20 / 400)
    assert np.all(V.delta == 0)


def test_equalized_null_with_equal_entries_is_plugin():
    d = np.array([0.4, 0.4, 0.1])
    sk = np.eye(3)
    a = null_v(d, NullSpec("equalized", (0, 1)), sk, 20.0, 4, 20).V
    b = plugin_v(d, sk, 20.0, 4, 20).V
    assert np.allclose(a, b, rtol=1e-14)


def test_equalized_null_values():
    d = np.array([0.6, 0.2, -0.1])
    nd = null_distances(d, NullSpec("equalized", (0, 1)))
    assert nd.tolist() == [0.4, 0.4, 0.0]
    with pytest.raises(IndexError):
        null_distances(d, NullSpec("equalized", (0, 5)))


def test_null_spec_validation():
    with pytest.raises(ValueError):
        NullSpec("bogus")
    with pytest.raises(ValueError):
        NullSpec("equalized", (1,))


def test_null_v_shape_check():
    with pytest.raises(DimensionError):
        null_v(np.zeros(3), NullSpec(), np.eye(4), 1.0, 2, 1)


def test_plugin_clamps_negative_estimates():
    d = np.array([-0.2, 0.3, 0.1])
    a = plugin_v(d, np.eye(3), 10.0, 3, 10).V
    b = predict_v(np.maximum(d, 0), np.eye(3), 10.0, 3, 10).V
    assert np.array_equal(a, b)
