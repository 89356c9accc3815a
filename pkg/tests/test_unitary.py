import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtwo.state import GridSpec, WaveFunction, marginal_density, normalize
from qtwo.unitary import (HamiltonianSpec, MultiTimeSpec, SchrodingerPropagator, apply_dirac,
                          dirac_mode_propagator, dirac_step_1d, energy,
                          multitime_consistency_residual, positive_energy_projection,
                          schrodinger_step)


def packet(grid, c=0.0, s=1.0, k=0.0):
    return normalize(WaveFunction.from_function(grid, lambda x: np.exp(-(x - c) ** 2 / (4 * s * s) + 1j * k * x)))


def width(psi):
    x = psi.grid.axis()
    rho = marginal_density(psi, 0)
    m = np.sum(x * rho) / rho.sum()
    return np.sqrt(np.sum((x - m) ** 2 * rho) / rho.sum())


def test_free_gaussian_spreading_matches_closed_form():
    g = GridSpec(1, 1, 512, 60.0)
    s, m, t = 1.0, 1.0, 3.0
    psi = schrodinger_step(packet(g, s=s, k=0.7), HamiltonianSpec([m]), t)
    assert width(psi) == pytest.approx(s * np.sqrt(1 + (t / (2 * m * s * s)) ** 2), rel=1e-9)


def test_spectral_and_crank_nicolson_agree_in_harmonic_well():
    g = GridSpec(1, 1, 256, 20.0)
    V = 0.5 * g.axis() ** 2
    h = HamiltonianSpec([1.0], V)
    psi0 = packet(g, c=1.0)
    a, b = psi0, psi0
    ps, pc = SchrodingerPropagator(g, h, 0.005), SchrodingerPropagator(g, h, 0.005, method="cn")
    for _ in range(200):
        a, b = ps.step(a), pc.step(b)
    assert abs(a.inner(b)) == pytest.approx(1.0, abs=2e-3)


def test_norm_and_energy_conserved():
    g = GridSpec(1, 2, 64, 16.0)
    x1, x2 = g.mesh()
    h = HamiltonianSpec([1.0, 2.0], np.broadcast_to(0.1 * (x1 - x2) ** 2, g.shape))
    psi = normalize(WaveFunction.from_function(g, lambda a, b: np.exp(-(a - 1) ** 2 / 2 - (b + 1) ** 2 / 3 + 0.4j * a)))
    e0 = energy(psi, h)
    prop = SchrodingerPropagator(g, h, 0.01)
    for _ in range(100):
        psi = prop.step(psi)
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)
    assert energy(psi, h) == pytest.approx(e0, rel=1e-4)


@given(st.floats(-20, 20), st.floats(0.05, 3), st.floats(-10, 10))
@settings(max_examples=100, deadline=None)
def test_dirac_mode_propagator_is_unitary_and_composes(k, m, t):
    U = dirac_mode_propagator(k, m, t)
    assert np.allclose(U @ U.conj().T, np.eye(2), atol=1e-12)
    assert np.allclose(dirac_mode_propagator(k, m, t / 2) @ dirac_mode_propagator(k, m, t / 2), U, atol=1e-10)


def test_dirac_step_matches_generator_for_short_times():
    g = GridSpec(1, 1, 128, 30.0)
    base = packet(g, s=1.5, k=0.4).amplitudes
    psi = WaveFunction(g, np.stack([base, 0.3 * base], axis=-1), 2)
    dt = 1e-4
    fwd = dirac_step_1d(psi, 1.0, dt).amplitudes
    bwd = dirac_step_1d(psi, 1.0, -dt).amplitudes
    deriv = (fwd - bwd) / (2 * dt)
    assert np.allclose(1j * deriv, apply_dirac(psi, 1.0), atol=1e-6)


def test_positive_energy_projection_is_idempotent_and_stationary_in_sign():
    g = GridSpec(1, 1, 128, 30.0)
    base = packet(g, s=1.0, k=0.8).amplitudes
    psi = WaveFunction(g, np.stack([base, 0.5j * base], axis=-1), 2)
    p1 = positive_energy_projection(psi, 1.0)
    p2 = positive_energy_projection(p1, 1.0)
    assert np.allclose(p1.amplitudes, p2.amplitudes, atol=1e-13)
    # expectation of H on the projected part is positive
    e = np.real(np.vdot(p1.amplitudes, apply_dirac(p1, 1.0)))
    assert e > 0


def test_multitime_residual_vanishes_without_interaction():
    g = GridSpec(1, 2, 64, 16.0)
    psi = normalize(WaveFunction.from_function(g, lambda a, b: np.exp(-(a - b) ** 2 / 2 - (a + b) ** 2 / 8)))
    hs = (HamiltonianSpec([1.0, 1.0]), HamiltonianSpec([1.0, 1.0]))
    x1, x2 = g.mesh()
    V = np.broadcast_to(np.exp(-(x1 - x2) ** 2), g.shape)
    free = multitime_consistency_residual(MultiTimeSpec(hs), psi)
    inter = multitime_consistency_residual(MultiTimeSpec(hs, V), psi)
    assert free < 1e-10
    assert inter > 1e3 * free
