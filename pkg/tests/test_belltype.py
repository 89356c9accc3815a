import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtwo.belltype import (HybridModel, HybridPropagator, InteractionSpec, LatticeHamiltonian,
                           LatticeSpec, SectoredState, _allowed_pair, hybrid_rates, hybrid_state,
                           jump_rates, local_creation_interaction, occupancy_master_equation,
                           probability_current, random_interaction, random_state,
                           sample_hybrid_configurations, simulate_hybrid, simulate_hybrid_ensemble,
                           simulate_pure_jump, simulate_pure_jump_ensemble)
from qtwo.bohm import BohmRunConfig, evolve_ensemble
from qtwo.errors import UnknownConfiguration, ZeroOccupancy
from qtwo.harness.checks import lattice_scenario, minimality_residuals, two_configuration_rates
from qtwo.rng import make_rng
from qtwo.state import inverse_cdf_sample
from qtwo.stats import chi_square
from qtwo.unitary import HamiltonianSpec


@st.composite
def instances(draw):
    sites = draw(st.integers(2, 6))
    n_max = draw(st.integers(1, min(sites, 3)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = make_rng(seed)
    lattice = LatticeSpec(sites, n_max)
    return (random_interaction(lattice, rng, draw(st.floats(0.01, 10.0)), draw(st.booleans())),
            random_state(lattice, rng))


@given(instances())
@settings(max_examples=150, deadline=None)
def test_minimal_rates_realise_current_one_sidedly(inst):
    HI, psi = inst
    ident, overlap, anti = minimality_residuals(psi.amplitudes, HI)
    assert ident < 1e-12
    assert overlap == 0.0
    assert anti < 1e-14


def test_two_configuration_example():
    up, down, eps = two_configuration_rates(0.37)
    assert up == pytest.approx(2 * eps, abs=1e-15) and down == 0.0
    lattice = LatticeSpec(2, 1)
    HI = InteractionSpec.from_elements(lattice, {((0,), ()): 0.37})
    psi = SectoredState.from_dict(lattice, {(0,): 1 / np.sqrt(2), (): 1j / np.sqrt(2)})
    assert probability_current(psi, (0,), (), HI) == pytest.approx(0.37)


def test_real_state_and_real_interaction_give_no_jumps():
    lattice = LatticeSpec(4, 2)
    HI = local_creation_interaction(lattice, 0.8, hopping=0.5)
    psi = SectoredState.normalized(lattice, np.arange(1, lattice.dimension + 1, dtype=float))
    assert all(v == 0.0 for q in lattice.configurations for v in jump_rates(psi, q, HI).values())


def test_zero_occupancy_and_unknown_configuration():
    lattice = LatticeSpec(3, 1)
    HI = local_creation_interaction(lattice, 1.0)
    psi = SectoredState.from_dict(lattice, {(): 1.0})
    with pytest.raises(ZeroOccupancy):
        jump_rates(psi, (1,), HI)
    with pytest.raises(UnknownConfiguration):
        jump_rates(psi, (0, 1), HI)


def test_interaction_validation():
    lattice = LatticeSpec(3, 2)
    M = np.zeros((lattice.dimension,) * 2, complex)
    M[0, 1] = 1.0
    with pytest.raises(ValueError, match="Hermitian"):
        InteractionSpec(lattice, M)
    i, j = lattice.index(()), lattice.index((0, 1))
    M = np.zeros_like(M)
    M[i, j] = M[j, i] = 1.0
    with pytest.raises(ValueError, match="more than one particle"):
        InteractionSpec(lattice, M)


def test_allowed_pairs():
    assert _allowed_pair((0,), (0, 2))
    assert _allowed_pair((0, 1), (0, 2))
    assert not _allowed_pair((0,), (1, 2))
    assert not _allowed_pair((0, 1), (2, 3))


def test_master_equation_reproduces_born_occupancy():
    """The rate equation driven by minimal rates keeps p_t = |psi_t|^2."""
    H, psi0 = lattice_scenario(5, 2, 3)
    times = [0.5, 1.0, 2.0]
    p = occupancy_master_equation(psi0, H, 2.0, times)
    for t, row in zip(times, p):
        assert np.allclose(row, H.evolve(psi0, t).probabilities(), atol=1e-7)


def test_jump_ensemble_matches_master_equation_at_several_times():
    H, psi0 = lattice_scenario(4, 2, 9)
    rng = make_rng(20)
    Q0 = inverse_cdf_sample(psi0.probabilities(), rng, 4000)
    times = [0.5, 1.0, 1.5]
    ens = simulate_pure_jump_ensemble(psi0, H, Q0, 1.5, 0.02, rng, times=times)
    p = occupancy_master_equation(psi0, H, 1.5, times)
    for t, row in zip(times, p):
        counts = np.bincount(ens.snapshots[t], minlength=psi0.lattice.dimension)
        assert chi_square(counts, row).passed


def test_single_path_invariants():
    H, psi0 = lattice_scenario(4, 2, 4)
    q0 = psi0.lattice.configurations[int(np.argmax(psi0.probabilities()))]
    path = simulate_pure_jump(psi0, H, q0, 3.0, 0.01, make_rng(21))
    assert np.all(np.diff(path.times) > 0)
    for t, a, b in path.jumps:
        assert a != b and _allowed_pair(a, b)
    assert path.at(0.0) == q0


def test_hybrid_propagator_is_unitary():
    model = HybridModel(32, 16.0, 1.0, 0.8, 1.0)
    state = hybrid_state(model, lambda x: np.exp(-x**2 / 2 + 0.3j * x))
    prop = HybridPropagator(model)
    for _ in range(50):
        state = prop.half_and_full(state, 0.02)[1]
    assert state.sector_weights().sum() == pytest.approx(1.0, abs=1e-12)
    assert state.sector_weights()[1] > 0.01


def test_hybrid_rates_are_one_sided():
    model = HybridModel(32, 16.0, 1.0, 0.8, 1.0)
    prop = HybridPropagator(model)
    state = hybrid_state(model, lambda x: np.exp(-x**2 / 2 + 0.3j * x))
    for _ in range(10):
        state = prop.half_and_full(state, 0.05)[1]
    cf, cs, kf, ks = (np.nan_to_num(r) for r in hybrid_rates(model, state))
    a1, a2 = state.discrete()
    occ1, occ2 = np.abs(a1) ** 2, np.abs(a2) ** 2
    # flow single l -> pair (l, j) versus the reverse flow pair (l, j) -> keep first l
    assert np.max(np.minimum(cf * occ1[:, None], kf * occ2)) == 0.0
    assert min(r.min() for r in (cf, cs, kf, ks)) >= 0.0


def test_decoupled_hybrid_reduces_to_bohm():
    model = HybridModel(64, 20.0, 1.0, 0.0, 1.0)
    state = hybrid_state(model, lambda x: np.exp(-x**2 / 4 + 0.5j * x))
    rng = make_rng(22)
    sectors, Q = sample_hybrid_configurations(state, rng, 50)
    assert np.all(sectors == 1)
    cfg = BohmRunConfig(0.01)
    res = simulate_hybrid_ensemble(state, model, sectors, Q, 1.0, cfg, rng)
    ref = evolve_ensemble(state.psi1, HamiltonianSpec([1.0]), Q[:, :1], cfg, 1.0)
    assert np.all(res.sectors == 1)
    assert np.allclose(res.positions[:, 0], ref.positions[:, 0], atol=1e-12)


def test_single_hybrid_path_changes_sector_by_one():
    model = HybridModel(32, 16.0, 1.0, 1.0, 1.0)
    state = hybrid_state(model, lambda x: np.exp(-x**2 / 4 + 0.5j * x))
    path = simulate_hybrid(state, model, [0.1], 2.0, BohmRunConfig(0.01), make_rng(23))
    for t, a, b in path.jumps:
        assert abs(len(a) - len(b)) == 1
