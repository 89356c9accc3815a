"""GRW spontaneous collapse: jump process, matter density, flashes.

Labels are 1-based (``1..N``) everywhere in this module, matching the
flash records. The collapse operator of label ``i`` centred at ``x`` is the
normalised Gaussian of width sigma in ``q_i - x``; on a periodic grid it
is the wrapped Gaussian (sum over periodic images), which keeps it exactly
normalised on the circle and agrees with the plain Gaussian whenever the
box is much wider than sigma.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.signal import fftconvolve

from .errors import EnsembleMismatch, IncompatibleGrid, ZeroNorm
from .state import WaveFunction, inverse_cdf_sample, marginal_density, normalize
from .stats import ks_two_sample
from .unitary import SchrodingerPropagator


@dataclass(frozen=True)
class GrwParams:
    lam: float = 1.0
    sigma: float = 1.0
    lambda_mode: str = "uniform"
    m_ref: float = None  # mass_proportional mode; defaults to the smallest mass

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.lambda_mode not in ("uniform", "mass_proportional"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")
        if self.m_ref is not None and not self.m_ref > 0:
            raise ValueError("m_ref must be > 0")

    def check(self, grid):
        if self.sigma < 2 * grid.spacing:
            raise IncompatibleGrid(
                f"sigma={self.sigma} is below two grid spacings ({2 * grid.spacing})"
            )


@dataclass(frozen=True)
class CollapseEvent:
    time: float
    center: tuple
    label: int

    def record(self):
        return {"t": self.time, "x": list(self.center), "label": self.label}


@dataclass
class GrwRunRecord:
    flashes: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)  # time -> WaveFunction
    densities: dict = field(default_factory=dict)  # time -> matter density
    final: WaveFunction = None


# --- collapse operator -----------------------------------------------------

def _gauss_1d(delta, sigma, grid, power=1.0):
    """1D collapse profile at offsets ``delta`` raised to ``power`` (1 or 1/2)."""
    norm = 1.0 / np.sqrt(2 * np.pi * sigma**2)
    if not grid.periodic:
        return (norm * np.exp(-delta**2 / (2 * sigma**2))) ** power
    L = grid.extent_per_axis
    delta = (delta + 0.5 * L) % L - 0.5 * L
    n_img = int(np.ceil(10 * sigma / L))
    total = np.zeros_like(delta, dtype=float)
    for j in range(-n_img, n_img + 1):
        total += np.exp(-(delta + j * L) ** 2 / (2 * sigma**2))
    return (norm * total) ** power


def collapse_profile(grid, center, sigma, power=1.0):
    """Profile over one particle's d-dim grid: prod_c g(x_c - center_c)."""
    x = grid.axis()
    d = grid.dim_per_particle
    out = np.ones((1,) * d)
    for c in range(d):
        shape = [1] * d
        shape[c] = -1
        out = out * _gauss_1d(x - center[c], sigma, grid, power).reshape(shape)
    return np.broadcast_to(out, (grid.points_per_axis,) * d)


@lru_cache(maxsize=32)
def _smear_kernel(grid, sigma):
    """Collapse Gaussian on the grid offsets: its FFT when periodic, else the full stencil."""
    d = grid.dim_per_particle
    n, dx = grid.points_per_axis, grid.spacing
    off = np.arange(n) * dx if grid.periodic else (np.arange(2 * n - 1) - (n - 1)) * dx
    line = _gauss_1d(off, sigma, grid)
    kern = np.ones((1,) * d)
    for c in range(d):
        shape = [1] * d
        shape[c] = -1
        kern = kern * line.reshape(shape)
    return sfft.fftn(kern) * dx**d if grid.periodic else kern * dx**d


def _smear(marg, grid, sigma):
    """Convolve a one-particle density with the collapse Gaussian."""
    kern = _smear_kernel(grid, sigma)
    if grid.periodic:
        out = np.real(sfft.ifftn(sfft.fftn(marg) * kern))
    else:
        out = fftconvolve(marg, kern, mode="same")
        # centres are confined to the box; renormalise the leaked tail mass
        out = out / (out.sum() * grid.spacing**grid.dim_per_particle)
    return np.clip(out, 0.0, None)


def collapse_rate_density(psi, label, params):
    """x -> <psi|Lambda_label(x) psi> on the one-particle grid."""
    params.check(psi.grid)
    marg = marginal_density(psi, label - 1)
    return _smear(marg, psi.grid, params.sigma)


def label_weights(N, params, masses=None):
    if params.lambda_mode == "uniform" or masses is None:
        return np.full(N, 1.0 / N)
    m = np.asarray(masses, dtype=float)
    return m / m.sum()


def total_rate(N, params, masses=None):
    if params.lambda_mode == "uniform":
        return N * params.lam
    if masses is None:
        raise ValueError("mass_proportional mode needs particle masses")
    m = np.asarray(masses, dtype=float)
    m_ref = params.m_ref if params.m_ref is not None else m.min()
    return params.lam * m.sum() / m_ref


def sample_waiting_time(N, params, masses=None, rng=None):
    if N < 1:
        raise ValueError("N must be >= 1")
    return float(rng.exponential(1.0 / total_rate(N, params, masses)))


def _sample_center(density, grid, rng):
    idx = inverse_cdf_sample(density, rng)
    d = grid.dim_per_particle
    multi = np.unravel_index(idx, (grid.points_per_axis,) * d)
    x = grid.axis()
    jitter = rng.random(d) - 0.5
    return grid.wrap(np.array([x[i] for i in multi]) + jitter * grid.spacing)


def sample_collapse(psi, params, rng, masses=None):
    """Draw ``(label, center)`` for a collapse of ``psi``."""
    N = psi.grid.particles
    w = label_weights(N, params, masses)
    label = 1 if N == 1 else int(rng.choice(N, p=w)) + 1
    dens = collapse_rate_density(psi, label, params)
    if not dens.sum() > 1e-300:
        raise ZeroNorm("collapse rate density vanishes")
    return label, _sample_center(dens, psi.grid, rng)


def apply_collapse(psi, label, center, params):
    """``Lambda^{1/2} psi / ||Lambda^{1/2} psi||`` along particle ``label``."""
    grid = psi.grid
    factor = collapse_profile(grid, np.atleast_1d(center), params.sigma, power=0.5)
    axes = grid.particle_axes(label - 1)
    shape = [1] * psi.amplitudes.ndim
    for a in axes:
        shape[a] = grid.points_per_axis
    a = psi.amplitudes * factor.reshape(shape)
    n = np.sqrt(np.sum(np.abs(a) ** 2) * grid.cell_volume)
    if not n > 1e-300:
        raise ZeroNorm(f"collapse at {center} annihilates the wave function")
    return psi.replace(a / n)


def matter_density(psi, masses):
    """GRWm density m(x) = sum_i m_i * marginal_i(x)."""
    masses = np.asarray(masses, dtype=float)
    if masses.size != psi.grid.particles:
        raise IncompatibleGrid(f"{masses.size} masses for {psi.grid.particles} particles")
    return sum(m * marginal_density(psi, i) for i, m in enumerate(masses))


# --- evolution -------------------------------------------------------------

class _FreeMomentumEvolver:
    """Exact free evolution with psi held in momentum representation.

    The free propagator factorises over particles, and the phase on
    particle j's momenta neither changes particle i's marginal nor fails to
    commute with a collapse on particle i. Each particle therefore keeps its
    own clock and is only brought up to date when it collapses or when the
    full state is requested.
    """

    def __init__(self, psi, h):
        self.grid = psi.grid
        self.psi = psi
        self.axes = tuple(range(psi.grid.n_axes))
        self.hat = sfft.fftn(psi.amplitudes, axes=self.axes)
        k = psi.grid.momenta()
        self.k2 = 0.5 * k**2
        self.masses = np.asarray(h.masses, dtype=float)
        self.time = psi.time
        self.clocks = np.full(psi.grid.particles, psi.time)
        self._mixed = None

    def advance(self, dt):
        if dt > 0:
            self.time += dt
            self._mixed = None

    def _sync(self, i):
        lag = self.time - self.clocks[i]
        if lag == 0:
            return
        phase = np.exp(-1j * lag * self.k2 / self.masses[i])
        for a in self.grid.particle_axes(i):
            shape = [1] * self.hat.ndim
            shape[a] = -1
            self.hat = self.hat * phase.reshape(shape)
        self.clocks[i] = self.time

    def wavefunction(self):
        for i in range(self.grid.particles):
            self._sync(i)
        return self.psi.replace(sfft.ifftn(self.hat, axes=self.axes), self.time)

    def _position_along(self, label):
        """Position representation along particle ``label`` and its marginal."""
        if self._mixed is None or self._mixed[0] != label:
            grid = self.grid
            self._sync(label - 1)
            keep = grid.particle_axes(label - 1)
            mixed = sfft.ifftn(self.hat, axes=keep)
            others = tuple(a for a in range(mixed.ndim) if a not in keep)
            n_other = grid.n_axes - len(keep)
            marg = (np.abs(mixed) ** 2).sum(axis=others)
            marg = marg * (grid.spacing / grid.points_per_axis) ** n_other
            self._mixed = (label, mixed, marg)
        return self._mixed[1], self._mixed[2]

    def rate_density(self, label, params):
        return _smear(self._position_along(label)[1], self.grid, params.sigma)

    def collapse(self, label, center, params):
        grid = self.grid
        keep = grid.particle_axes(label - 1)
        mixed, marg = self._position_along(label)
        self._mixed = None
        factor = collapse_profile(grid, np.atleast_1d(center), params.sigma, power=0.5)
        n2 = np.sum(factor**2 * marg) * grid.spacing ** len(keep)
        if not n2 > 1e-600:
            raise ZeroNorm(f"collapse at {center} annihilates the wave function")
        shape = [1] * mixed.ndim
        for a in keep:
            shape[a] = grid.points_per_axis
        self.hat = sfft.fftn(mixed * (factor / np.sqrt(n2)).reshape(shape), axes=keep)


class _SplitEvolver:
    """General evolution by fixed dt Strang substeps (last one cut short)."""

    def __init__(self, psi, h, dt):
        if dt is None:
            raise ValueError("a time step dt is required when the potential is nonzero")
        self.psi, self.h, self.dt = psi, h, dt
        self._props = {}

    @property
    def time(self):
        return self.psi.time

    def _prop(self, step):
        key = round(step, 14)
        if key not in self._props:
            self._props[key] = SchrodingerPropagator(self.psi.grid, self.h, step)
        return self._props[key]

    def advance(self, dt):
        remaining = dt
        while remaining > 1e-14:
            step = min(self.dt, remaining)
            self.psi = self._prop(step).step(self.psi)
            remaining -= step

    def wavefunction(self):
        return self.psi

    def rate_density(self, label, params):
        return collapse_rate_density(self.psi, label, params)

    def collapse(self, label, center, params):
        self.psi = apply_collapse(self.psi, label, center, params)


def _evolver(psi, h, dt):
    if h.free and psi.grid.periodic:
        return _FreeMomentumEvolver(psi, h)
    return _SplitEvolver(psi, h, dt)


def run_grw(psi0, h, params, T, snapshot_times=(), rng=None, dt=None, on_collapse=None):
    """Simulate one GRW history on ``[psi0.time, psi0.time + T]``.

    Waiting times are exponential with the psi-independent total rate, so
    jumps are scheduled exactly. ``on_collapse(psi, label, center)`` is an
    optional diagnostic hook called with the pre-collapse state.
    """
    h.check(psi0.grid)
    params.check(psi0.grid)
    N = psi0.grid.particles
    masses = h.masses
    evo = _evolver(normalize(psi0), h, dt)
    t0 = psi0.time
    record = GrwRunRecord()
    snaps = sorted(float(s) for s in snapshot_times if 0 <= s <= T)
    rate = total_rate(N, params, masses)
    weights = label_weights(N, params, masses)
    t = 0.0
    next_jump = rng.exponential(1.0 / rate)
    si = 0
    while True:
        next_snap = snaps[si] if si < len(snaps) else np.inf
        t_event = min(next_jump, next_snap, T)
        evo.advance(t_event - t)
        t = t_event
        if t == next_snap:
            psi = evo.wavefunction()
            record.snapshots[t] = psi
            record.densities[t] = matter_density(psi, masses)
            si += 1
            continue
        if t == next_jump and next_jump <= T:
            label = 1 if N == 1 else int(rng.choice(N, p=weights)) + 1
            dens = evo.rate_density(label, params)
            center = _sample_center(dens, psi0.grid, rng)
            if on_collapse is not None:
                on_collapse(evo.wavefunction(), label, center)
            evo.collapse(label, center, params)
            record.flashes.append(CollapseEvent(t0 + t, tuple(float(c) for c in center), label))
            next_jump = t + rng.exponential(1.0 / rate)
            continue
        break
    record.final = evo.wavefunction()
    return record


# --- density-matrix equivalence ---------------------------------------------

def density_matrix_distance(ens_a, ens_b):
    """Hilbert-Schmidt distance between two weighted pure-state mixtures.

    With the states as columns of M = QR, rho_a - rho_b = Q (R D R^dag) Q^dag
    for signed weights D, so the norm is that of a small k x k matrix and
    avoids the cancellation of expanding |rho_a - rho_b|^2 into overlaps.
    """
    states = [p for _, p in ens_a] + [p for _, p in ens_b]
    M = np.stack([p.amplitudes.ravel() for p in states], axis=1) * np.sqrt(states[0].grid.cell_volume)
    D = np.array([w for w, _ in ens_a] + [-w for w, _ in ens_b], dtype=float)
    R = np.linalg.qr(M, mode="r")
    return float(np.linalg.norm((R * D) @ R.conj().T))


@dataclass
class FlashHistoryReport:
    first_time: object
    first_position: object
    centroid: object
    density_matrices_equal: bool
    hs_distance: float
    n_runs: int
    first_flash_counts: tuple

    @property
    def flash_tests_pass(self):
        return self.first_time.passed and self.first_position.passed


def _centroid(density, grid):
    x = grid.axis()
    d = grid.dim_per_particle
    line = density.sum(axis=tuple(range(1, d))) if d > 1 else density
    return float(np.sum(x * line) / np.sum(line))


def flash_history_statistic(ensemble_a, ensemble_b, h, params, T, n_runs, rng, dt=None, level=0.01):
    """Compare GRWf and GRWm statistics of two wave-function ensembles.

    Each ensemble is a list of ``(weight, WaveFunction)``. Runs draw their
    initial state by weight. First-flash time and first coordinate of the
    first-flash centre are compared by two-sample KS (runs without a flash
    in [0, T] contribute nothing to those samples); the GRWm matter-density
    centroid at T is compared the same way.
    """
    grids = {p.grid for _, p in ensemble_a} | {p.grid for _, p in ensemble_b}
    if len(grids) != 1:
        raise EnsembleMismatch("ensembles live on different grids")
    ens = []
    for e in (ensemble_a, ensemble_b):
        w = np.array([x for x, _ in e], dtype=float)
        ens.append((w / w.sum(), [normalize(p) for _, p in e]))
    hs = density_matrix_distance(list(zip(*ens[0])), list(zip(*ens[1])))
    samples = []
    for w, states in ens:
        times, pos, cents = [], [], []
        for _ in range(n_runs):
            psi = states[int(rng.choice(len(states), p=w))]
            rec = run_grw(psi, h, params, T, snapshot_times=(T,), rng=rng, dt=dt)
            if rec.flashes:
                times.append(rec.flashes[0].time - psi.time)
                pos.append(rec.flashes[0].center[0])
            cents.append(_centroid(rec.densities[T], psi.grid))
        samples.append((times, pos, cents))
    (ta, pa, ca), (tb, pb, cb) = samples
    return FlashHistoryReport(
        first_time=ks_two_sample(ta, tb, level, "first_flash_time"),
        first_position=ks_two_sample(pa, pb, level, "first_flash_position"),
        centroid=ks_two_sample(ca, cb, level, "grwm_centroid"),
        density_matrices_equal=bool(hs < 1e-8),
        hs_distance=hs,
        n_runs=n_runs,
        first_flash_counts=(len(ta), len(tb)),
    )
