"""Minimal jump processes for Bell-type models.

Two settings share the same rate law. On a periodic lattice, a
configuration is a set of occupied sites (hard core, at most
``max_particles`` of them) and the interaction Hamiltonian is a dense
Hermitian matrix on the span of all such sets. In the hybrid continuum
model, one- and two-particle sectors on a 1D grid are coupled by a smooth
creation kernel, and between jumps the configuration follows Bohmian
guidance.

Rates follow the minimal choice: the net current

    J(q, q') = 2 Im[ conj(psi(q)) <q|H_I|q'> psi(q') ]

is carried entirely by the jump q' -> q when positive, so that
``sigma(q' -> q) = max(J(q, q'), 0) / |psi(q')|^2``.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .bohm import BohmRunConfig, GuidanceField, rk_step, step_schedule
from .errors import StiffRates, UnknownConfiguration, ZeroOccupancy, NodeProximity
from .state import GridSpec, WaveFunction, inverse_cdf_sample, sample_configurations
from .unitary import HamiltonianSpec, SchrodingerPropagator

ZERO_OCCUPANCY = 1e-300
MAX_RATE_STEP = 0.05  # thinning bound on R * dt
MAX_REFINE = 20       # dt may be halved this many times before StiffRates


# --- lattice Fock space ----------------------------------------------------

@dataclass(frozen=True)
class LatticeSpec:
    sites: int = 8
    max_particles: int = 3

    def __post_init__(self):
        if self.sites < 2:
            raise ValueError(f"need at least 2 sites, got {self.sites}")
        if not 0 <= self.max_particles <= self.sites:
            raise ValueError(f"max_particles must lie in 0..{self.sites}")
        configs = [c for n in range(self.max_particles + 1)
                   for c in combinations(range(self.sites), n)]
        object.__setattr__(self, "_configs", tuple(configs))
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(configs)})

    @property
    def configurations(self):
        return self._configs

    @property
    def dimension(self):
        return len(self._configs)

    def index(self, q):
        key = tuple(sorted(int(s) for s in q))
        try:
            return self._index[key]
        except KeyError:
            raise UnknownConfiguration(f"{tuple(q)} is not a configuration of {self}") from None

    def sector_slice(self, n):
        start = sum(1 for c in self._configs if len(c) < n)
        stop = start + sum(1 for c in self._configs if len(c) == n)
        return slice(start, stop)

    def sector_sizes(self):
        return np.array([len(c) for c in self._configs])


@dataclass(frozen=True, eq=False)
class SectoredState:
    lattice: LatticeSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).ravel()
        if a.size != self.lattice.dimension:
            raise ValueError(f"{a.size} amplitudes for {self.lattice.dimension} configurations")
        n = np.sum(np.abs(a) ** 2)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"state norm^2 is {n}, expected 1")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def normalized(cls, lattice, amplitudes):
        a = np.asarray(amplitudes, dtype=complex).ravel()
        n = np.linalg.norm(a)
        if not n > 0:
            raise ValueError("zero state")
        return cls(lattice, a / n)

    @classmethod
    def from_dict(cls, lattice, values):
        a = np.zeros(lattice.dimension, dtype=complex)
        for q, v in values.items():
            a[lattice.index(q)] = v
        return cls.normalized(lattice, a)

    def __getitem__(self, q):
        return self.amplitudes[self.lattice.index(q)]

    def sector(self, n):
        return self.amplitudes[self.lattice.sector_slice(n)]

    def sector_weights(self):
        return np.array([np.sum(np.abs(self.sector(n)) ** 2)
                         for n in range(self.lattice.max_particles + 1)])

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2


def _allowed_pair(q, p):
    """Pairs linked by one creation/annihilation or by moving one particle."""
    a, b = set(q), set(p)
    if abs(len(a) - len(b)) == 1:
        small, big = (a, b) if len(a) < len(b) else (b, a)
        return small < big
    return len(a) == len(b) and len(a ^ b) == 2


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    """Dense interaction matrix on a lattice; Hermitian by construction."""
    lattice: LatticeSpec
    matrix: np.ndarray

    def __post_init__(self):
        M = np.array(self.matrix, dtype=complex)
        D = self.lattice.dimension
        if M.shape != (D, D):
            raise ValueError(f"interaction matrix must be {D}x{D}, got {M.shape}")
        if np.any(M != M.conj().T):
            raise ValueError("interaction matrix is not Hermitian")
        configs = self.lattice.configurations
        rows, cols = np.nonzero(M)
        for r, c in zip(rows, cols):
            if r != c and not _allowed_pair(configs[r], configs[c]):
                raise ValueError(f"matrix element between {configs[r]} and {configs[c]} "
                                 "changes more than one particle")
        M.flags.writeable = False
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_elements(cls, lattice, elements):
        """Build from ``{(q, q'): value}``; the conjugate partner is filled in."""
        M = np.zeros((lattice.dimension,) * 2, dtype=complex)
        for (q, p), v in elements.items():
            i, j = lattice.index(q), lattice.index(p)
            if i == j:
                if np.imag(v) != 0:
                    raise ValueError("diagonal elements must be real")
                M[i, i] = np.real(v)
                continue
            if M[j, i] != 0 and M[j, i] != np.conj(v):
                raise ValueError(f"conflicting elements for {q}, {p}")
            M[i, j] = v
            M[j, i] = np.conj(v)
        return cls(lattice, M)

    def element(self, q, p):
        return self.matrix[self.lattice.index(q), self.lattice.index(p)]


def local_creation_interaction(lattice, g=1.0, hopping=0.0):
    """Create/annihilate at any site with amplitude ``g`` (scalar or per site);
    optional nearest-neighbour hopping ``-hopping``."""
    g = np.broadcast_to(np.asarray(g, dtype=complex), (lattice.sites,))
    els = {}
    for q in lattice.configurations:
        if len(q) < lattice.max_particles:
            for s in range(lattice.sites):
                if s not in q and g[s] != 0:
                    els[(tuple(sorted(q + (s,))), q)] = g[s]
        if hopping:
            for s in q:
                t = (s + 1) % lattice.sites
                if t not in q:
                    moved = tuple(sorted(set(q) - {s} | {t}))
                    els[(moved, q)] = -hopping
    return InteractionSpec.from_elements(lattice, els)


def random_interaction(lattice, rng, scale=1.0, hopping=True):
    """Random complex couplings on every allowed pair."""
    configs = lattice.configurations
    M = np.zeros((lattice.dimension,) * 2, dtype=complex)
    for i, q in enumerate(configs):
        for j in range(i):
            p = configs[j]
            if len(q) == len(p) and not hopping:
                continue
            if _allowed_pair(q, p):
                v = scale * (rng.normal() + 1j * rng.normal()) / np.sqrt(2)
                M[i, j], M[j, i] = v, np.conj(v)
    return InteractionSpec(lattice, M)


def random_state(lattice, rng):
    a = rng.normal(size=lattice.dimension) + 1j * rng.normal(size=lattice.dimension)
    return SectoredState.normalized(lattice, a)


class LatticeHamiltonian:
    """``H = diag(energies) + H_I`` with an exact spectral propagator."""

    def __init__(self, interaction, energies=None):
        self.interaction = interaction
        self.lattice = interaction.lattice
        D = self.lattice.dimension
        self.energies = np.zeros(D) if energies is None else np.asarray(energies, dtype=float)
        if self.energies.shape != (D,):
            raise ValueError(f"need {D} diagonal energies")
        self.matrix = interaction.matrix + np.diag(self.energies)
        self.eigenvalues, self.eigenvectors = np.linalg.eigh(self.matrix)

    @classmethod
    def with_chemical_potential(cls, interaction, mu):
        return cls(interaction, mu * interaction.lattice.sector_sizes())

    def coefficients(self, state):
        return self.eigenvectors.conj().T @ np.asarray(getattr(state, "amplitudes", state))

    def evolve_coefficients(self, coeffs, t):
        return self.eigenvectors @ (np.exp(-1j * self.eigenvalues * t) * coeffs)

    def evolve(self, state, t):
        vec = self.evolve_coefficients(self.coefficients(state), t)
        return SectoredState(self.lattice, vec / np.linalg.norm(vec))


# --- currents and rates ----------------------------------------------------

def current_matrix(amplitudes, H_I):
    """J[q, q'] for all pairs (rows: destination)."""
    a = np.asarray(amplitudes)
    M = H_I.matrix if isinstance(H_I, InteractionSpec) else np.asarray(H_I)
    return 2 * np.imag(np.conj(a)[:, None] * M * a[None, :])


def rate_matrix(amplitudes, H_I):
    """S[q, q'] = sigma(q' -> q); columns at zero-occupancy configurations are NaN."""
    a = np.asarray(amplitudes)
    J = current_matrix(a, H_I)
    np.fill_diagonal(J, 0.0)
    occ = np.abs(a) ** 2
    ok = occ > ZERO_OCCUPANCY
    return np.where(ok[None, :], np.maximum(J, 0.0) / np.where(ok, occ, 1.0)[None, :], np.nan)


def probability_current(psi, q, q_prime, H_I):
    L = psi.lattice
    i, j = L.index(q), L.index(q_prime)
    if i == j:
        raise ValueError("current between a configuration and itself")
    a = psi.amplitudes
    return float(2 * np.imag(np.conj(a[i]) * H_I.matrix[i, j] * a[j]))


def jump_rates(psi, q_prime, H_I):
    """Minimal rates out of ``q_prime``: ``{q: sigma(q_prime -> q)}``."""
    L = psi.lattice
    j = L.index(q_prime)
    a = psi.amplitudes
    occ = abs(a[j]) ** 2
    if not occ > ZERO_OCCUPANCY:
        raise ZeroOccupancy(f"|psi({tuple(q_prime)})|^2 = {occ:.3g}")
    out = {}
    for i in np.flatnonzero(H_I.matrix[:, j]):
        if i == j:
            continue
        J = 2 * np.imag(np.conj(a[i]) * H_I.matrix[i, j] * a[j])
        out[L.configurations[i]] = float(max(J, 0.0) / occ)
    return out


# --- jump paths ------------------------------------------------------------

@dataclass
class JumpPath:
    times: list = field(default_factory=list)
    configurations: list = field(default_factory=list)
    jumps: list = field(default_factory=list)  # (time, from, to)

    def append(self, t, q):
        if self.times and not t > self.times[-1]:
            raise ValueError(f"jump path times must increase ({t} after {self.times[-1]})")
        self.times.append(float(t))
        self.configurations.append(q)

    def at(self, t):
        """Configuration occupied at time ``t`` (right-continuous)."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.configurations[max(k, 0)]


def _refined_steps(step, max_rate):
    """Number of equal substeps so that ``max_rate * substep <= MAX_RATE_STEP``."""
    k = 0
    while max_rate * step / 2**k > MAX_RATE_STEP:
        k += 1
        if k > MAX_REFINE:
            return None
    return 2**k


@dataclass
class PureJumpEnsemble:
    final: np.ndarray                  # configuration index per run
    snapshots: dict                    # time offset -> configuration indices
    states: dict                       # time offset -> SectoredState
    n_jumps: np.ndarray
    paths: list = None


def simulate_pure_jump_ensemble(psi0, H, Q0, T, dt, rng, times=(), record=False):
    """Run many pure-jump paths that share ``psi_t``.

    ``Q0`` holds configuration indices. Jumps are thinned per substep with
    the rates evaluated at the substep midpoint; substeps are halved until
    ``max R * dt <= 0.05`` over the occupied configurations.
    """
    L = psi0.lattice
    Q = np.array(np.atleast_1d(Q0), dtype=int)
    occ0 = psi0.probabilities()[Q]
    if np.any(occ0 <= ZERO_OCCUPANCY):
        raise ZeroOccupancy("initial configuration has zero probability")
    coeffs = H.coefficients(psi0)
    H_I = H.interaction
    stops = set(round(float(s), 12) for s in times)
    out = PureJumpEnsemble(Q, {}, {}, np.zeros(Q.size, dtype=int))
    if record:
        out.paths = [JumpPath() for _ in range(Q.size)]
        for path, q in zip(out.paths, Q):
            path.append(0.0, L.configurations[q])
    if 0.0 in stops:
        out.snapshots[0.0] = Q.copy()
        out.states[0.0] = psi0
    t_prev = 0.0
    for t_next in step_schedule(T, dt, stops):
        step = t_next - t_prev
        n_sub = 1
        while True:
            sub = step / n_sub
            mids = [H.evolve_coefficients(coeffs, t_prev + (k + 0.5) * sub) for k in range(n_sub)]
            Rmax = 0.0
            mats = []
            for a in mids:
                S = rate_matrix(a, H_I)
                R = S[:, np.unique(Q)].sum(axis=0)
                if np.any(np.isnan(R)):
                    raise ZeroOccupancy("a run sits at a configuration of vanishing |psi|^2")
                Rmax = max(Rmax, float(R.max(initial=0.0)))
                mats.append(S)
            need = _refined_steps(sub, Rmax)
            if need is None or n_sub * need > 2**MAX_REFINE:
                raise StiffRates(f"rates up to {Rmax:.3g} need dt below {step / 2**MAX_REFINE:.3g}")
            if need == 1:
                break
            n_sub *= need
        for k, S in enumerate(mats):
            S = np.nan_to_num(S)
            R = S.sum(axis=0)
            fire = rng.random(Q.size) < -np.expm1(-R[Q] * sub)
            idx = np.flatnonzero(fire)
            if idx.size:
                cum = np.cumsum(S[:, Q[idx]], axis=0)
                u = rng.random(idx.size) * cum[-1]
                dest = np.minimum((cum < u[None, :]).sum(axis=0), L.dimension - 1)
                if record:
                    t_jump = t_prev + (k + 0.5) * sub
                    for r, d in zip(idx, dest):
                        qa, qb = L.configurations[Q[r]], L.configurations[d]
                        out.paths[r].append(t_jump, qb)
                        out.paths[r].jumps.append((t_jump, qa, qb))
                Q[idx] = dest
                out.n_jumps[idx] += 1
        t_prev = t_next
        key = round(t_next, 12)
        if key in stops:
            out.snapshots[key] = Q.copy()
            out.states[key] = SectoredState.normalized(L, H.evolve_coefficients(coeffs, t_next))
    if record:
        for path, q in zip(out.paths, Q):
            if T > path.times[-1]:
                path.append(T, L.configurations[q])
    out.final = Q
    return out


def simulate_pure_jump(psi0, H, Q0, T, dt, rng):
    """One pure-jump path from configuration ``Q0`` (a site tuple)."""
    q = psi0.lattice.index(Q0)
    if not psi0.probabilities()[q] > ZERO_OCCUPANCY:
        raise ZeroOccupancy(f"|psi0({tuple(Q0)})|^2 vanishes")
    return simulate_pure_jump_ensemble(psi0, H, [q], T, dt, rng, record=True).paths[0]


def occupancy_master_equation(psi0, H, T, times):
    """Integrate dp/dt = sum_q' S[q,q'] p(q') - R(q) p(q) with exact psi_t rates."""
    from scipy.integrate import solve_ivp

    coeffs = H.coefficients(psi0)

    def rhs(t, p):
        S = np.nan_to_num(rate_matrix(H.evolve_coefficients(coeffs, t), H.interaction))
        return S @ p - S.sum(axis=0) * p

    sol = solve_ivp(rhs, (0.0, T), psi0.probabilities(), t_eval=sorted(times),
                    rtol=1e-10, atol=1e-12, method="DOP853")
    return sol.y.T


# --- hybrid continuum model ------------------------------------------------

@dataclass(frozen=True)
class HybridModel:
    """One- and two-particle sectors on a periodic 1D grid.

    The creation kernel adds a particle at distance ~``width`` from an
    existing one: ``<x, y|H_I|z> = coupling / sqrt(2) * k(x - y) *
    (delta(x - z) + delta(y - z))`` with ``k`` a unit-height Gaussian.
    """
    points: int = 64
    extent: float = 20.0
    mass: float = 1.0
    coupling: float = 0.5
    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("kernel width must be > 0")
        g1 = GridSpec(1, 1, self.points, self.extent)
        g2 = GridSpec(1, 2, self.points, self.extent)
        object.__setattr__(self, "grid1", g1)
        object.__setattr__(self, "grid2", g2)
        x = g1.axis()
        d = x[:, None] - x[None, :]
        d = (d + 0.5 * self.extent) % self.extent - 0.5 * self.extent
        k = np.exp(-d**2 / (2 * self.width**2))
        object.__setattr__(self, "_k", k)
        object.__setattr__(self, "_c", self.coupling * np.sqrt(g1.spacing) / np.sqrt(2))

    @property
    def kernel(self):
        return self._c * self._k

    def creation_matrix(self):
        """Dense C[(i, j), l] mapping sector-1 to sector-2 discrete amplitudes."""
        n = self.points
        C = np.zeros((n, n, n))
        idx = np.arange(n)
        C[idx, :, idx] += self.kernel
        C[:, idx, idx] += self.kernel
        return C.reshape(n * n, n)


@dataclass(frozen=True, eq=False)
class HybridState:
    """Continuum amplitudes of both sectors, ``psi2`` symmetric."""
    psi1: WaveFunction
    psi2: WaveFunction

    @property
    def time(self):
        return self.psi1.time

    def discrete(self):
        g = self.psi1.grid
        return (self.psi1.amplitudes * np.sqrt(g.spacing), self.psi2.amplitudes * g.spacing)

    def sector_weights(self):
        a1, a2 = self.discrete()
        return np.array([np.sum(np.abs(a1) ** 2), np.sum(np.abs(a2) ** 2)])


def hybrid_state(model, f1=None, f2=None, time=0.0):
    """Sample sector functions on the grids and normalise jointly.

    ``f2`` is symmetrised; a missing sector is zero.
    """
    g1, g2 = model.grid1, model.grid2
    a1 = np.zeros(g1.shape, dtype=complex) if f1 is None else \
        np.asarray(WaveFunction.from_function(g1, f1).amplitudes)
    if f2 is None:
        a2 = np.zeros(g2.shape, dtype=complex)
    else:
        a2 = np.asarray(WaveFunction.from_function(g2, f2).amplitudes)
        a2 = 0.5 * (a2 + a2.T)
    n2 = np.sum(np.abs(a1) ** 2) * g1.spacing + np.sum(np.abs(a2) ** 2) * g1.spacing**2
    if not n2 > 0:
        raise ValueError("both sectors vanish")
    s = 1 / np.sqrt(n2)
    return HybridState(WaveFunction(g1, a1 * s, time=time), WaveFunction(g2, a2 * s, time=time))


class HybridPropagator:
    """Strang splitting ``U0(dt/2) exp(-i H_I dt) U0(dt/2)``.

    The coupling exponential is exact through the SVD of the creation
    matrix. ``H_I = 0`` reduces each step to two free half steps.
    """

    def __init__(self, model):
        self.model = model
        self.h1 = HamiltonianSpec([model.mass])
        self.h2 = HamiltonianSpec([model.mass, model.mass])
        self._free = {}
        if model.coupling != 0:
            U, s, Wh = np.linalg.svd(model.creation_matrix(), full_matrices=False)
            self.U, self.s, self.W = U, s, Wh.conj().T

    def free(self, state, dt):
        key = round(dt, 14)
        if key not in self._free:
            self._free[key] = (SchrodingerPropagator(self.model.grid1, self.h1, dt),
                               SchrodingerPropagator(self.model.grid2, self.h2, dt))
        p1, p2 = self._free[key]
        return HybridState(p1.step(state.psi1), p2.step(state.psi2))

    def couple(self, state, dt):
        if self.model.coupling == 0:
            return state
        g = self.model.grid1
        n, dx = g.points_per_axis, g.spacing
        a1, a2 = state.discrete()
        a2 = a2.reshape(-1)
        x1, x2 = self.W.conj().T @ a1, self.U.conj().T @ a2
        c, s = np.cos(self.s * dt), np.sin(self.s * dt)
        b1 = a1 + self.W @ ((c - 1) * x1 - 1j * s * x2)
        b2 = a2 + self.U @ ((c - 1) * x2 - 1j * s * x1)
        return HybridState(state.psi1.replace(b1 / np.sqrt(dx)),
                           state.psi2.replace(b2.reshape(n, n) / dx))

    def half_and_full(self, state, dt):
        """State at ``t + dt/2`` (for guidance) and at ``t + dt``."""
        first = self.free(state, 0.5 * dt)
        half = self.couple(first, 0.5 * dt)
        full = self.free(self.couple(first, dt), 0.5 * dt)
        t1 = state.time + dt
        full = HybridState(full.psi1.replace(full.psi1.amplitudes, t1),
                           full.psi2.replace(full.psi2.amplitudes, t1))
        return half, full


def hybrid_rates(model, state):
    """Minimal jump rates between sectors on the grid cells.

    Returns ``(create_first, create_second, keep_first, keep_second)``:
    ``create_*[l, j]`` is the rate from one particle in cell ``l`` to the
    pair with the new particle in cell ``j`` placed in the second (first)
    slot; ``keep_*[i, j]`` is the rate from the pair in cells ``(i, j)`` to
    the single particle keeping the first (second) one. Entries at cells of
    vanishing weight are NaN.
    """
    a1, a2 = state.discrete()
    K = model.kernel
    n = a1.size
    eye = np.eye(n, dtype=bool)
    # current into pair (l, j) from single l, and into (j, l) from single l
    J_first = 2 * np.imag(np.conj(a2) * K * np.where(eye, 2.0, 1.0) * a1[:, None])
    J_second = np.where(eye, 0.0, 2 * np.imag(np.conj(a2.T) * K.T * a1[:, None]))
    occ1 = np.abs(a1) ** 2
    occ2 = np.abs(a2) ** 2
    ok1 = occ1 > ZERO_OCCUPANCY
    ok2 = occ2 > ZERO_OCCUPANCY
    inv1 = np.where(ok1, 1.0 / np.where(ok1, occ1, 1.0), np.nan)[:, None]
    inv2 = np.where(ok2, 1.0 / np.where(ok2, occ2, 1.0), np.nan)
    create_first = np.maximum(J_first, 0) * inv1
    create_second = np.maximum(J_second, 0) * inv1
    keep_first = np.maximum(-J_first, 0) * inv2          # (i, j) -> i
    keep_second = np.maximum(-J_second.T, 0) * inv2      # (i, j) -> j
    return create_first, create_second, keep_first, keep_second


@dataclass
class HybridEnsemble:
    sectors: np.ndarray               # 1 or 2 per run
    positions: np.ndarray             # (P, 2); second column NaN in sector 1
    failed: np.ndarray
    snapshots: dict                   # time offset -> (sectors, positions)
    states: dict                      # time offset -> HybridState
    paths: list = None
    n_stiff: int = 0


def sample_hybrid_configurations(state, rng, n):
    w = state.sector_weights()
    sectors = np.where(rng.random(n) < w[1] / w.sum(), 2, 1)
    pos = np.full((n, 2), np.nan)
    k1 = np.flatnonzero(sectors == 1)
    k2 = np.flatnonzero(sectors == 2)
    if k1.size:
        pos[k1, :1] = sample_configurations(state.psi1, rng, k1.size)
    if k2.size:
        pos[k2] = sample_configurations(state.psi2, rng, k2.size)
    return sectors, pos


def _cells(grid, x):
    i = np.floor((np.asarray(x) + 0.5 * grid.extent_per_axis) / grid.spacing).astype(int)
    return i % grid.points_per_axis


def simulate_hybrid_ensemble(state0, model, sectors0, Q0, T, cfg, rng, times=(), record=False):
    """Bohmian motion in each sector interrupted by minimal sector jumps.

    Within a step the positions are advanced with the step's guidance
    fields (start, midpoint, end), then each run jumps with probability
    ``1 - exp(-R dt)`` where ``R`` is the exit rate of its current cell
    at the midpoint state. Steps are subdivided when ``max R dt > 0.05``.
    """
    grid1, grid2 = model.grid1, model.grid2
    prop = HybridPropagator(model)
    m = model.mass
    sectors = np.array(np.atleast_1d(sectors0), dtype=int)
    Q = np.array(np.atleast_2d(Q0), dtype=float)
    if Q.shape[1] == 1:
        Q = np.concatenate([Q, np.full((Q.shape[0], 1), np.nan)], axis=1)
    Q[:, 0] = grid1.wrap(Q[:, 0])
    Q[sectors == 2, 1] = grid1.wrap(Q[sectors == 2, 1])
    P = sectors.size
    failed = np.zeros(P, dtype=bool)
    stops = set(round(float(s), 12) for s in times)
    res = HybridEnsemble(sectors, Q, failed, {}, {})
    if record:
        res.paths = [JumpPath() for _ in range(P)]
        for r in range(P):
            res.paths[r].append(state0.time, _hybrid_config(sectors[r], Q[r]))
    if 0.0 in stops:
        res.snapshots[0.0] = (sectors.copy(), Q.copy())
        res.states[0.0] = state0

    def fields(state):
        return (GuidanceField(state.psi1, [m], cfg.node_guard, cfg.interpolation),
                GuidanceField(state.psi2, [m, m], cfg.node_guard, cfg.interpolation))

    def move(Qs, h, f_a, f_b, f_c, sec):
        k = 0 if sec == 1 else 1
        dim = 1 if sec == 1 else 2
        return rk_step(Qs[:, :dim], h, f_a[k], f_b[k], f_c[k], cfg.integrator)

    state = state0
    f0 = fields(state)
    t_prev = 0.0
    for t_next in step_schedule(T, cfg.dt, stops):
        step = t_next - t_prev
        n_sub = 1
        while True:
            sub = step / n_sub
            plan = []
            s = state
            for _ in range(n_sub):
                half, full = prop.half_and_full(s, sub)
                plan.append((half, full))
                s = full
            Rmax = 0.0
            rate_sets = []
            alive = ~failed
            for half, _ in plan:
                rates = hybrid_rates(model, half)
                R = _exit_rates(grid1, rates, sectors, Q, alive)
                if np.any(np.isnan(R)):
                    raise ZeroOccupancy("a run sits in a cell of vanishing |psi|^2")
                Rmax = max(Rmax, float(R.max(initial=0.0)))
                rate_sets.append(rates)
            need = _refined_steps(sub, Rmax)
            if need == 1:
                break
            if need is None or n_sub * need > 2**MAX_REFINE:
                raise StiffRates(f"jump rates up to {Rmax:.3g} need a step below "
                                 f"{step / 2**MAX_REFINE:.3g}")
            n_sub *= need
        t_sub = t_prev
        for (half, full), rates in zip(plan, rate_sets):
            fh, f1 = fields(half), fields(full)
            for sec in (1, 2):
                idx = np.flatnonzero((sectors == sec) & ~failed)
                if not idx.size:
                    continue
                Qn, ok = move(Q[idx], sub, f0, fh, f1, sec)
                dim = Qn.shape[1]
                good, bad = idx[ok], idx[~ok]
                Q[good, :dim] = grid1.wrap(Qn[ok])
                failed[bad] = True
            _fire_jumps(grid1, rates, sectors, Q, failed, sub, rng,
                        res.paths if record else None, full.time - 0.5 * sub)
            f0, state, t_sub = f1, full, t_sub + sub
        t_prev = t_next
        key = round(t_next, 12)
        if key in stops:
            res.snapshots[key] = (sectors.copy(), Q.copy())
            res.states[key] = state
        if record:
            for r in range(P):
                if not failed[r]:
                    res.paths[r].append(state.time, _hybrid_config(sectors[r], Q[r]))
    res.sectors, res.positions, res.failed = sectors, Q, failed
    res.final_state = state
    return res


def _hybrid_config(sector, q):
    return tuple(float(x) for x in q[:sector])


def _exit_rates(grid, rates, sectors, Q, alive):
    cf, cs, kf, ks = rates
    R = np.zeros(sectors.size)
    one = np.flatnonzero((sectors == 1) & alive)
    two = np.flatnonzero((sectors == 2) & alive)
    if one.size:
        l = _cells(grid, Q[one, 0])
        R[one] = cf[l].sum(axis=1) + cs[l].sum(axis=1)
    if two.size:
        i, j = _cells(grid, Q[two, 0]), _cells(grid, Q[two, 1])
        R[two] = kf[i, j] + ks[i, j]
    return R


def _fire_jumps(grid, rates, sectors, Q, failed, h, rng, paths, t_jump):
    cf, cs, kf, ks = rates
    alive = ~failed
    R = np.nan_to_num(_exit_rates(grid, rates, sectors, Q, alive))
    fire = alive & (rng.random(sectors.size) < -np.expm1(-R * h))
    x = grid.axis()
    n = grid.points_per_axis
    for r in np.flatnonzero(fire):
        before = _hybrid_config(sectors[r], Q[r])
        if sectors[r] == 1:
            l = _cells(grid, Q[r, 0])
            w = np.concatenate([cf[l], cs[l]])
            k = inverse_cdf_sample(w, rng)
            new = grid.wrap(x[k % n] + (rng.random() - 0.5) * grid.spacing)
            if k < n:    # new particle in the second slot
                Q[r] = (Q[r, 0], new)
            else:
                Q[r] = (new, Q[r, 0])
            sectors[r] = 2
        else:
            i, j = _cells(grid, Q[r, 0]), _cells(grid, Q[r, 1])
            keep = 0 if rng.random() * (kf[i, j] + ks[i, j]) < kf[i, j] else 1
            Q[r] = (Q[r, keep], np.nan)
            sectors[r] = 1
        if paths is not None:
            after = _hybrid_config(sectors[r], Q[r])
            paths[r].jumps.append((t_jump, before, after))


def simulate_hybrid(state0, model, Q0, T, cfg=None, rng=None):
    """Single hybrid run from configuration ``Q0`` (1 or 2 positions)."""
    cfg = cfg or BohmRunConfig()
    q = np.atleast_1d(np.asarray(Q0, dtype=float))
    sector = q.size
    if sector not in (1, 2):
        raise ValueError("a hybrid configuration has one or two positions")
    res = simulate_hybrid_ensemble(state0, model, [sector], q[None, :], T, cfg, rng, record=True)
    if res.failed[0]:
        raise NodeProximity("hybrid trajectory reached a node of its sector wave function")
    return res.paths[0]
