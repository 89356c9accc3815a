import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtwo.errors import IncompatibleGrid
from qtwo.grw import (GrwParams, apply_collapse, collapse_rate_density, density_matrix_distance,
                      flash_history_statistic, matter_density, run_grw, sample_collapse,
                      sample_waiting_time, total_rate)
from qtwo.harness.checks import (_cell_pit, _direct_rate_density, collapse_variance, grw_cat_state,
                                 quadratic_ensembles)
from qtwo.harness.runner import gaussian_terms
from qtwo.rng import make_rng
from qtwo.state import GridSpec
from qtwo.stats import chi_square, ks_one_sample
from qtwo.unitary import HamiltonianSpec


@given(st.floats(0.6, 3.0), st.floats(0.5, 3.0), st.floats(-2.0, 2.0))
@settings(max_examples=30, deadline=None)
def test_collapse_narrows_to_gaussian_product_variance(s, sigma, center):
    got, want = collapse_variance(s, sigma, center)
    assert got == pytest.approx(want, rel=1e-6)


@given(st.floats(1.0, 3.0), st.floats(-4, 4))
@settings(max_examples=25, deadline=None)
def test_rate_density_integrates_to_one_and_matches_quadrature(sigma, c):
    g = GridSpec(1, 2, 32, 16.0)
    psi = gaussian_terms(g, [{"center": [c, -c], "width": 1.0}, {"center": [0.0, 1.0], "width": 0.7}])
    params = GrwParams(1.0, sigma)
    for label in (1, 2):
        dens = collapse_rate_density(psi, label, params)
        assert dens.sum() * g.spacing == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(dens, _direct_rate_density(psi, label, sigma), atol=1e-12)


def test_box_grid_renormalises_leaked_tail():
    g = GridSpec(1, 1, 64, 10.0, boundary="box")
    psi = gaussian_terms(g, [{"center": [4.0], "width": 0.5}])
    dens = collapse_rate_density(psi, 1, GrwParams(1.0, 1.0))
    assert dens.sum() * g.spacing == pytest.approx(1.0, abs=1e-12)


def test_sigma_below_two_spacings_rejected():
    g = GridSpec(1, 1, 64, 64.0)
    with pytest.raises(IncompatibleGrid):
        GrwParams(1.0, 1.5).check(g)


def test_apply_collapse_keeps_unit_norm_and_touches_only_its_label():
    g = GridSpec(1, 2, 32, 16.0)
    psi = gaussian_terms(g, [{"center": [-2, 2], "width": 1.0}])
    post = apply_collapse(psi, 2, [1.0], GrwParams(1.0, 1.0))
    assert post.norm() == pytest.approx(1.0, abs=1e-12)
    # product state: particle 1 marginal unchanged
    from qtwo.state import marginal_density
    assert np.allclose(marginal_density(post, 0), marginal_density(psi, 0), atol=1e-12)


def test_total_rate_modes():
    assert total_rate(5, GrwParams(2.0, 1.0)) == 10.0
    p = GrwParams(1.0, 1.0, "mass_proportional")
    assert total_rate(2, p, [1.0, 3.0]) == pytest.approx(4.0)
    assert total_rate(2, GrwParams(1.0, 1.0, "mass_proportional", m_ref=2.0), [1.0, 3.0]) == pytest.approx(2.0)


def test_waiting_times_are_exponential():
    rng = make_rng(10)
    w = np.array([sample_waiting_time(4, GrwParams(0.5, 1.0), rng=rng) for _ in range(4000)])
    assert ks_one_sample(w, lambda x: 1 - np.exp(-2.0 * np.asarray(x))).passed


def test_sampled_centres_follow_rate_density():
    g = GridSpec(1, 1, 64, 16.0)
    psi = gaussian_terms(g, [{"center": [-3.0], "width": 0.6}, {"center": [2.0], "width": 1.0}])
    params = GrwParams(1.0, 1.0)
    rng = make_rng(11)
    x, dx = g.axis(), g.spacing
    dens = _direct_rate_density(psi, 1, 1.0)
    u = [_cell_pit(sample_collapse(psi, params, rng)[1][0], x, dx, dens) for _ in range(4000)]
    assert chi_square(np.histogram(u, 20, (0, 1))[0], np.full(20, 0.05)).passed


def test_history_invariants():
    g = GridSpec(1, 3, 16, 12.0)
    psi = gaussian_terms(g, [{"center": [0, 1, -1]}])
    rec = run_grw(psi, HamiltonianSpec([1.0] * 3), GrwParams(2.0, 1.5), 5.0,
                  snapshot_times=(1.0, 2.5), rng=make_rng(12))
    t = [f.time for f in rec.flashes]
    assert all(np.diff(t) > 0) and all(0 < x <= 5.0 for x in t)
    assert {f.label for f in rec.flashes} <= {1, 2, 3}
    assert set(rec.densities) == {1.0, 2.5}
    for d in rec.densities.values():
        assert d.sum() * g.spacing == pytest.approx(3.0, abs=1e-10)
    assert rec.final.norm() == pytest.approx(1.0, abs=1e-12)


def test_free_fast_path_matches_split_stepping():
    g = GridSpec(1, 2, 32, 16.0)
    psi = gaussian_terms(g, [{"center": [-1, 2], "width": 1.0, "momentum": [0.5, 0.0]}])
    params = GrwParams(1.5, 1.2)
    fast = run_grw(psi, HamiltonianSpec([1.0, 2.0]), params, 3.0, rng=make_rng(13))
    zero = np.zeros(g.shape)
    split = run_grw(psi, HamiltonianSpec([1.0, 2.0], zero), params, 3.0, rng=make_rng(13), dt=0.01)
    assert [f.label for f in fast.flashes] == [f.label for f in split.flashes]
    assert np.allclose([f.center for f in fast.flashes], [f.center for f in split.flashes], atol=1e-9)
    assert np.allclose(fast.final.amplitudes, split.final.amplitudes, atol=1e-9)


def test_matter_density_weights_masses():
    g = GridSpec(1, 2, 32, 16.0)
    psi = gaussian_terms(g, [{"center": [-2, 2]}])
    m = matter_density(psi, [1.0, 5.0])
    assert m.sum() * g.spacing == pytest.approx(6.0)
    x = g.axis()
    assert np.sum(x * m) * g.spacing == pytest.approx(-2 + 10, abs=1e-6)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_density_matrix_distance_matches_dense_matrices(seed, ka, kb):
    from qtwo.state import WaveFunction, normalize
    g = GridSpec(1, 1, 12, 6.0)
    rng = np.random.default_rng(seed)

    def mixture(k):
        w = rng.random(k) + 0.1
        return [(float(x / w.sum()), normalize(WaveFunction(g, rng.normal(size=12) + 1j * rng.normal(size=12))))
                for x in w]

    A, B = mixture(ka), mixture(kb)

    def rho(ens):
        return sum(w * np.outer(p.amplitudes, p.amplitudes.conj()) * g.cell_volume for w, p in ens)

    assert density_matrix_distance(A, B) == pytest.approx(np.linalg.norm(rho(A) - rho(B)), abs=1e-12)


def test_quadratic_ensembles_share_density_matrix():
    A, B = quadratic_ensembles(GridSpec(1, 1, 256, 40.0))
    assert density_matrix_distance(A, B) < 1e-13
    C = [(1.0, A[0][1])]
    assert density_matrix_distance(A, C) > 0.1


def test_flash_statistics_agree_but_matter_density_differs_small():
    A, B = quadratic_ensembles(GridSpec(1, 1, 256, 40.0))
    rep = flash_history_statistic(A, B, HamiltonianSpec([1.0]), GrwParams(1.0, 1.0), 2.0, 300,
                                  make_rng(14))
    assert rep.flash_tests_pass
    assert not rep.centroid.passed


def test_cat_state_flash_count_is_poisson_in_short_runs():
    psi = grw_cat_state()
    counts = [len(run_grw(psi, HamiltonianSpec([1.0] * 5), GrwParams(1.0, 3.0), 4.0, rng=r).flashes)
              for r in make_rng(15).spawn(150)]
    assert np.mean(counts) == pytest.approx(20.0, abs=3 * np.sqrt(20 / 150))
