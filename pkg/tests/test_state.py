import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtwo.errors import GridTooLarge, IncompatibleGrid, ZeroNorm
from qtwo.rng import make_rng, spawn
from qtwo.state import (GridSpec, WaveFunction, inverse_cdf_sample, marginal_density, normalize,
                        probability_density, sample_configurations)
from qtwo.stats import cell_cdf, ks_one_sample


def gaussian(grid, c=0.0, s=1.0):
    return normalize(WaveFunction.from_function(grid, lambda *xs: np.exp(-sum((x - c) ** 2 for x in xs) / (4 * s * s))))


def test_cell_centred_axis_tiles_the_domain():
    g = GridSpec(1, 1, 8, 4.0)
    x = g.axis()
    assert x[0] == pytest.approx(-2 + 0.25) and x[-1] == pytest.approx(2 - 0.25)
    assert np.allclose(np.diff(x), 0.5)


def test_axis_to_particle_mapping():
    g = GridSpec(2, 3, 8, 4.0)
    assert g.particle_axes(0) == (0, 1) and g.particle_axes(2) == (4, 5)
    assert g.n_axes == 6


def test_grid_budget_enforced():
    with pytest.raises(GridTooLarge):
        GridSpec(3, 3, 64, 10.0)
    with pytest.raises(ValueError):
        GridSpec(1, 1, 4, 1.0)


def test_shape_mismatch_rejected():
    with pytest.raises(IncompatibleGrid):
        WaveFunction(GridSpec(1, 1, 16, 4.0), np.ones(8))


def test_normalize_zero_raises():
    with pytest.raises(ZeroNorm):
        normalize(WaveFunction(GridSpec(1, 1, 16, 4.0), np.zeros(16)))


@given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
                min_size=16, max_size=16).filter(lambda v: sum(abs(z) ** 2 for z in v) > 1e-6))
@settings(max_examples=60, deadline=None)
def test_normalize_gives_unit_norm(values):
    psi = normalize(WaveFunction(GridSpec(1, 1, 16, 3.0), np.array(values)))
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)


def test_marginals_integrate_to_one():
    g = GridSpec(1, 2, 32, 10.0)
    psi = gaussian(g, 0.5, 1.2)
    for i in range(2):
        assert marginal_density(psi, i).sum() * g.spacing == pytest.approx(1.0, abs=1e-12)


def test_spin_summed_density():
    g = GridSpec(1, 1, 16, 4.0)
    a = np.zeros((16, 2), complex)
    a[:, 0], a[:, 1] = 1.0, 1j
    rho = probability_density(WaveFunction(g, a, 2))
    assert np.allclose(rho, 2.0)


def test_inverse_cdf_frequencies():
    w = np.array([0.1, 0.0, 0.6, 0.3])
    idx = inverse_cdf_sample(w, make_rng(3), 20000)
    assert 1 not in set(idx.tolist())
    assert np.allclose(np.bincount(idx, minlength=4) / 20000, w, atol=0.015)


def test_configuration_samples_follow_density():
    g = GridSpec(1, 1, 128, 20.0)
    psi = gaussian(g, 1.0, 1.5)
    x = sample_configurations(psi, make_rng(4), 5000)[:, 0]
    assert ks_one_sample(x, cell_cdf(g.axis(), marginal_density(psi, 0))).passed


def test_spawned_streams_are_reproducible_and_distinct():
    a = [r.random() for r in spawn(9, 3)]
    b = [r.random() for r in spawn(9, 3)]
    assert a == b and len(set(a)) == 3
