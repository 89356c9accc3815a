import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sst

from qtwo.rng import make_rng
from qtwo.stats import (binomial_within, cell_cdf, chi_square, kolmogorov_constant, ks_one_sample,
                        ks_two_sample)


def test_kolmogorov_constant_matches_scipy_asymptotics():
    for level in (0.1, 0.05, 0.01, 0.001):
        assert kolmogorov_constant(level) == pytest.approx(sst.kstwobign.isf(level), rel=1e-9)


@given(st.integers(5, 200), st.integers(5, 200), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_two_sample_distance_matches_scipy(n, m, seed):
    rng = make_rng(seed)
    a, b = rng.normal(size=n), rng.normal(0.3, 1.2, size=m)
    assert ks_two_sample(a, b).statistic == pytest.approx(sst.ks_2samp(a, b).statistic, abs=1e-12)


def test_one_sample_distance_matches_scipy_for_normal():
    rng = make_rng(1)
    x = rng.normal(size=500)
    r = ks_one_sample(x, sst.norm.cdf)
    assert r.statistic == pytest.approx(sst.kstest(x, "norm").statistic, abs=1e-12)
    assert r.passed


def test_one_sample_detects_shift():
    rng = make_rng(2)
    assert not ks_one_sample(rng.normal(0.5, 1, 5000), sst.norm.cdf).passed


def test_chi_square_statistic_matches_scipy_without_pooling():
    obs = np.array([18, 22, 25, 35])
    p = np.array([0.2, 0.2, 0.25, 0.35])
    r = chi_square(obs, p)
    assert r.statistic == pytest.approx(sst.chisquare(obs, p * obs.sum()).statistic)
    assert r.critical == pytest.approx(sst.chi2.isf(0.001, 3))


def test_chi_square_pools_sparse_cells():
    obs = np.array([500, 490, 3, 2, 5])
    p = np.array([0.5, 0.49, 0.004, 0.003, 0.003])
    r = chi_square(obs, p, min_expected=5.0)
    assert r.detail["bins"] < 5


def test_binomial_within_three_standard_errors():
    assert binomial_within(520, 1000, 0.5).passed
    assert not binomial_within(600, 1000, 0.5).passed


def test_cell_cdf_piecewise_linear_inside_cells():
    x = np.array([0.5, 1.5, 2.5, 3.5])
    F = cell_cdf(x, np.array([1.0, 0.0, 2.0, 1.0]))
    assert F(0.0) == 0.0 and F(4.0) == pytest.approx(1.0)
    assert F(0.5) == pytest.approx(0.125)
    assert F(2.0) == pytest.approx(0.25)
    assert F(2.5) == pytest.approx(0.5)
