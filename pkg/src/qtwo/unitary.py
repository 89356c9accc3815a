"""Unitary propagators.

Periodic grids use Strang-split spectral stepping (potential half kick,
exact kinetic phase in momentum space, potential half kick). Box grids, and
any caller that asks for ``method="cn"``, use Crank-Nicolson with a
second-order finite-difference Laplacian; the two schemes are independent
and the tests compare them against each other.

The 1+1D Dirac Hamiltonian is ``H = -i alpha d/dx + m beta`` with
``alpha = sigma_1`` and ``beta = sigma_3`` (c = hbar = 1).
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IncompatibleGrid, UnsupportedN, WrongSpinDims
from .state import WaveFunction

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """``H = sum_k -lap_k / (2 m_k) + V`` on a configuration grid.

    ``potential=None`` means V = 0, which lets the spectral propagator take
    any time step exactly. ``acts_on`` restricts the kinetic term to a
    subset of particles (used for the per-particle generators of a
    multi-time system); ``None`` means all particles.
    """

    masses: tuple
    potential: np.ndarray = None
    kind: str = "schrodinger"
    acts_on: tuple = None

    def __post_init__(self):
        m = tuple(float(x) for x in np.atleast_1d(self.masses))
        if not m or not all(x > 0 and np.isfinite(x) for x in m):
            raise ValueError(f"masses must be positive and finite, got {m}")
        object.__setattr__(self, "masses", m)
        if self.kind not in ("schrodinger", "dirac1d"):
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.potential is not None:
            v = np.array(self.potential, dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError("potential must be finite everywhere")
            v.flags.writeable = False
            object.__setattr__(self, "potential", v)
        if self.acts_on is not None:
            acts = tuple(int(i) for i in self.acts_on)
            if any(i < 0 or i >= len(m) for i in acts):
                raise ValueError(f"acts_on {acts} out of range for {len(m)} particles")
            object.__setattr__(self, "acts_on", acts)

    @property
    def free(self):
        return self.potential is None

    def check(self, grid):
        if len(self.masses) != grid.particles:
            raise IncompatibleGrid(f"{len(self.masses)} masses for {grid.particles} particles")
        if self.potential is not None and self.potential.shape != grid.shape:
            raise IncompatibleGrid(
                f"potential shape {self.potential.shape} does not match grid {grid.shape}"
            )

    def kinetic_particles(self):
        return range(len(self.masses)) if self.acts_on is None else self.acts_on


def kinetic_symbol(grid, h):
    """Kinetic energy sum_a k_a^2 / (2 m) as a broadcastable array over k-space."""
    k = grid.momenta()
    total = np.zeros((1,) * grid.n_axes)
    for i in h.kinetic_particles():
        for a in grid.particle_axes(i):
            shape = [1] * grid.n_axes
            shape[a] = -1
            total = total + (k**2 / (2 * h.masses[i])).reshape(shape)
    return np.broadcast_to(total, grid.shape)


def _spin_pad(arr, psi):
    return arr.reshape(arr.shape + (1,) * len(psi.spin_shape))


def _fd_laplacian_1d(n, dx, periodic):
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    lap = sp.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    if periodic:
        lap[0, n - 1] = 1.0
        lap[n - 1, 0] = 1.0
    return lap.tocsr() / dx**2


def fd_hamiltonian(grid, h):
    """Sparse finite-difference Hamiltonian on the flattened (row-major) grid."""
    n = grid.points_per_axis
    lap = _fd_laplacian_1d(n, grid.spacing, grid.periodic)
    eye = sp.identity(n, format="csr")
    H = sp.csr_matrix((grid.size, grid.size), dtype=complex)
    for i in h.kinetic_particles():
        for a in grid.particle_axes(i):
            factors = [lap if b == a else eye for b in range(grid.n_axes)]
            term = factors[0]
            for f in factors[1:]:
                term = sp.kron(term, f, format="csr")
            H = H - term / (2 * h.masses[i])
    if h.potential is not None:
        H = H + sp.diags(h.potential.ravel())
    return H.tocsc()


class SchrodingerPropagator:
    """Fixed-step propagator ``exp(-i H dt)``; build once, step many times."""

    def __init__(self, grid, h, dt, method=None):
        h.check(grid)
        if h.kind != "schrodinger":
            raise ValueError("SchrodingerPropagator needs a schrodinger Hamiltonian")
        self.grid, self.h, self.dt = grid, h, float(dt)
        self.method = method or ("spectral" if grid.periodic else "cn")
        axes = tuple(range(grid.n_axes))
        self._axes = axes
        if self.method == "spectral":
            if not grid.periodic:
                raise ValueError("spectral stepping requires a periodic grid")
            self._kin = np.exp(-1j * self.dt * kinetic_symbol(grid, h))
            self._half_v = None if h.free else np.exp(-0.5j * self.dt * h.potential)
        elif self.method == "cn":
            H = fd_hamiltonian(grid, h)
            eye = sp.identity(grid.size, format="csc", dtype=complex)
            self._lu = spla.splu((eye + 0.5j * self.dt * H).tocsc())
            self._rhs = (eye - 0.5j * self.dt * H).tocsr()
        else:
            raise ValueError(f"unknown method {self.method!r}")

    def step_array(self, a, spin_shape=()):
        if self.dt == 0:
            return a
        if self.method == "cn":
            if spin_shape:
                raise WrongSpinDims("Crank-Nicolson mode handles spinless wave functions only")
            out = self._lu.solve(self._rhs @ a.ravel())
            return out.reshape(a.shape)
        pad = (1,) * len(spin_shape)
        if self._half_v is not None:
            a = a * self._half_v.reshape(self._half_v.shape + pad)
        a = sfft.ifftn(sfft.fftn(a, axes=self._axes) * self._kin.reshape(self._kin.shape + pad), axes=self._axes)
        if self._half_v is not None:
            a = a * self._half_v.reshape(self._half_v.shape + pad)
        return a

    def step(self, psi):
        if psi.grid != self.grid:
            raise IncompatibleGrid("wave function grid differs from propagator grid")
        return psi.replace(self.step_array(psi.amplitudes, psi.spin_shape), psi.time + self.dt)


def schrodinger_step(psi, h, dt, method=None):
    h.check(psi.grid)
    return SchrodingerPropagator(psi.grid, h, dt, method).step(psi)


def apply_hamiltonian(psi, h, method=None):
    """Return the array ``H psi`` (spectral kinetic term on periodic grids)."""
    h.check(psi.grid)
    grid = psi.grid
    method = method or ("spectral" if grid.periodic else "fd")
    if h.kind == "dirac1d":
        out = np.zeros_like(psi.amplitudes)
        for i in h.kinetic_particles():
            out = out + apply_dirac(psi, h.masses[i], particle=i)
        if h.potential is not None:
            out = out + _spin_pad(h.potential, psi) * psi.amplitudes
        return out
    a = psi.amplitudes
    if method == "spectral":
        axes = tuple(range(grid.n_axes))
        kin = _spin_pad(kinetic_symbol(grid, h), psi)
        out = sfft.ifftn(sfft.fftn(a, axes=axes) * kin, axes=axes)
    else:
        if psi.spin_shape:
            raise WrongSpinDims("finite-difference Hamiltonian handles spinless wave functions only")
        kin_h = HamiltonianSpec(h.masses, None, h.kind, h.acts_on)
        out = (fd_hamiltonian(grid, kin_h) @ a.ravel()).reshape(a.shape)
    if h.potential is not None:
        out = out + _spin_pad(h.potential, psi) * a
    return out


def energy(psi, h, method=None):
    return float(np.real(np.vdot(psi.amplitudes, apply_hamiltonian(psi, h, method))) * psi.grid.cell_volume)


# --- Dirac -----------------------------------------------------------------

def dirac_mode_propagator(k, m, t):
    """``exp(-i t (k sigma_1 + m sigma_3))``; ``k`` and ``t`` broadcast together."""
    k, t = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(t, dtype=float))
    E = np.sqrt(k**2 + m**2)
    c = np.cos(E * t)
    s = t * np.sinc(E * t / np.pi)  # sin(E t) / E, finite at E = 0
    U = np.empty(k.shape + (2, 2), dtype=complex)
    U[..., 0, 0] = c - 1j * s * m
    U[..., 0, 1] = -1j * s * k
    U[..., 1, 0] = -1j * s * k
    U[..., 1, 1] = c + 1j * s * m
    return U


def _check_dirac(psi, particle):
    if psi.spin_dims != 2:
        raise WrongSpinDims(f"Dirac evolution needs spin_dims=2, got {psi.spin_dims}")
    if psi.grid.dim_per_particle != 1:
        raise WrongSpinDims("Dirac evolution is implemented in 1+1 dimensions only")
    if not 0 <= particle < psi.grid.particles:
        raise ValueError(f"particle {particle} out of range")
    if not psi.grid.periodic:
        raise IncompatibleGrid("Dirac stepping is spectral and needs a periodic grid")


def _apply_spin_matrix(a, M, spatial_axis, spin_axis):
    """Contract per-mode 2x2 matrices ``M`` (shape (n, 2, 2)) into ``a``."""
    a = np.moveaxis(a, (spatial_axis, spin_axis), (-2, -1))
    out = np.einsum("kij,...kj->...ki", M, a)
    return np.moveaxis(out, (-2, -1), (spatial_axis, spin_axis))


def dirac_step_1d(psi, m, dt, particle=0, potential=None):
    """Advance the spinor of one particle by ``dt`` (exact per momentum mode).

    ``potential`` (array over the configuration grid) is added by Strang
    splitting; without it the step is exact for any ``dt``.
    """
    _check_dirac(psi, particle)
    if dt == 0:
        return psi
    grid = psi.grid
    spin_axis = grid.n_axes + particle
    a = psi.amplitudes
    if potential is not None:
        half = _spin_pad(np.exp(-0.5j * dt * np.asarray(potential)), psi)
        a = a * half
    U = dirac_mode_propagator(grid.momenta(), m, dt)
    a = sfft.ifft(_apply_spin_matrix(sfft.fft(a, axis=particle), U, particle, spin_axis), axis=particle)
    if potential is not None:
        a = a * half
    return psi.replace(a, psi.time + dt)


def apply_dirac(psi, m, particle=0):
    """``(-i sigma_1 d/dx + m sigma_3) psi`` acting on one particle."""
    _check_dirac(psi, particle)
    k = psi.grid.momenta()
    Hk = np.empty(k.shape + (2, 2), dtype=complex)
    Hk[..., 0, 0] = m
    Hk[..., 1, 1] = -m
    Hk[..., 0, 1] = k
    Hk[..., 1, 0] = k
    spin_axis = psi.grid.n_axes + particle
    a = sfft.fft(psi.amplitudes, axis=particle)
    return sfft.ifft(_apply_spin_matrix(a, Hk, particle, spin_axis), axis=particle)


def positive_energy_projection(psi, m, particle=0):
    """Keep only the positive-energy part of one particle's spinor (not renormalized)."""
    _check_dirac(psi, particle)
    k = psi.grid.momenta()
    E = np.sqrt(k**2 + m**2)
    P = np.empty(k.shape + (2, 2), dtype=complex)
    P[..., 0, 0] = 0.5 * (1 + m / E)
    P[..., 1, 1] = 0.5 * (1 - m / E)
    P[..., 0, 1] = P[..., 1, 0] = 0.5 * k / E
    spin_axis = psi.grid.n_axes + particle
    a = sfft.fft(psi.amplitudes, axis=particle)
    return psi.replace(sfft.ifft(_apply_spin_matrix(a, P, particle, spin_axis), axis=particle))


# --- multi-time ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MultiTimeSpec:
    """One generator per particle; ``interaction`` is attributed to the first.

    A generator whose ``acts_on`` is ``None`` carries the kinetic term of
    its own particle only.
    """

    hamiltonians: tuple
    interaction: np.ndarray = None

    def generators(self):
        gens = []
        for k, h in enumerate(self.hamiltonians):
            acts = (k,) if h.acts_on is None else h.acts_on
            pot = h.potential
            if k == 0 and self.interaction is not None:
                pot = self.interaction if pot is None else pot + self.interaction
            gens.append(HamiltonianSpec(h.masses, pot, h.kind, acts))
        return gens


def multitime_consistency_residual(system, psi):
    """Quadrature norm of ``[H_1, H_2] psi`` for time-independent generators."""
    if psi.grid.particles != 2 or len(system.hamiltonians) != 2:
        raise UnsupportedN("consistency residual implemented for N = 2 only")
    h1, h2 = system.generators()
    a12 = apply_hamiltonian(psi.replace(apply_hamiltonian(psi, h2)), h1)
    a21 = apply_hamiltonian(psi.replace(apply_hamiltonian(psi, h1)), h2)
    return float(np.sqrt(np.sum(np.abs(a12 - a21) ** 2) * psi.grid.cell_volume))
