"""Bohmian guidance: velocity fields, trajectories, equivariance checks.

The velocity field ``v_a = Im(psi* d_a psi) / (m |psi|^2)`` is computed on
the grid (spectral derivative on periodic grids, central differences in a
box) and interpolated multilinearly to off-grid configurations. Where the
interpolated density falls to the node guard the step fails instead of
regularising: a silent fix would bias the equivariance statistics.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import NodeProximity, TooManyFailures, UnsupportedN, WrongSpinDims
from .state import (Configuration, Trajectory, WaveFunction, marginal_density,
                    probability_density, sample_configurations)
from .stats import cell_cdf, ks_one_sample
from .unitary import SchrodingerPropagator

_DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class BohmRunConfig:
    dt: float = 0.01
    integrator: str = "rk4"
    node_guard: float = 1e-12
    interpolation: str = "trilinear"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.node_guard > 0:
            raise ValueError(f"node_guard must be > 0, got {self.node_guard}")
        if self.integrator not in ("rk4", "midpoint"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.interpolation not in ("trilinear", "spectral"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")


def multilinear_interpolate(grid, values, points):
    """Interpolate grid ``values`` (shape grid.shape + extra) at ``points`` (P, D)."""
    points = np.atleast_2d(points)
    n, dx = grid.points_per_axis, grid.spacing
    u = (points + 0.5 * grid.extent_per_axis) / dx - 0.5
    i0 = np.floor(u).astype(int)
    if grid.periodic:
        f = u - i0
        i0 %= n
    else:
        i0 = np.clip(i0, 0, n - 2)
        f = np.clip(u - i0, 0.0, 1.0)
    extra = values.shape[grid.n_axes:]
    out = np.zeros((points.shape[0],) + extra, dtype=values.dtype)
    for corner in itertools.product((0, 1), repeat=grid.n_axes):
        idx = tuple((i0[:, a] + c) % n for a, c in enumerate(corner))
        w = np.prod([f[:, a] if c else 1.0 - f[:, a] for a, c in enumerate(corner)], axis=0)
        out += w.reshape((-1,) + (1,) * len(extra)) * values[idx]
    return out


def gradient(psi):
    """Gradient of the amplitudes, stacked on a trailing axis of length N*d."""
    grid = psi.grid
    a = psi.amplitudes
    parts = []
    for ax in range(grid.n_axes):
        if grid.periodic:
            k = grid.momenta().reshape([-1 if b == ax else 1 for b in range(a.ndim)])
            parts.append(sfft.ifft(1j * k * sfft.fft(a, axis=ax), axis=ax))
        else:
            parts.append(np.gradient(a, grid.spacing, axis=ax, edge_order=2))
    return np.stack(parts, axis=-1)


def _axis_masses(grid, masses):
    masses = np.asarray(masses, dtype=float)
    if masses.size != grid.particles:
        raise ValueError(f"{masses.size} masses for {grid.particles} particles")
    return np.repeat(masses, grid.dim_per_particle)


def velocity_field(psi, masses):
    """Grid velocity field (shape grid.shape + (N*d,)) and density."""
    grad = gradient(psi)
    a = psi.amplitudes[..., None]
    flux = np.imag(np.conj(a) * grad)
    rho = probability_density(psi)
    if psi.spin_axes:
        flux = flux.sum(axis=psi.spin_axes)
    safe = rho > _DENSITY_FLOOR
    v = np.where(safe[..., None], flux / np.where(safe, rho, 1.0)[..., None], 0.0)
    return v / _axis_masses(psi.grid, masses), rho


def _fourier_eval(hat, grid, points, deriv_axis=None):
    """Evaluate the trigonometric interpolant (coefficients ``hat``) at points."""
    k = grid.momenta()
    x0 = grid.axis()[0]
    out = np.broadcast_to(hat, (points.shape[0],) + hat.shape)
    for ax in reversed(range(grid.n_axes)):
        e = np.exp(1j * np.outer(points[:, ax] - x0, k))
        if ax == deriv_axis:
            e = e * (1j * k)
        out = np.einsum("p...k,pk->p...", out, e)
    return out


class GuidanceField:
    """Velocity field of one wave function, evaluable at many configurations."""

    def __init__(self, psi, masses, node_guard=1e-12, interpolation="trilinear", scale=1.0):
        self.grid = psi.grid
        self.node_guard = node_guard
        self.interpolation = interpolation
        self.scale = scale
        self._mass_axes = _axis_masses(psi.grid, masses)
        if interpolation == "trilinear":
            self.v, self.rho = velocity_field(psi, masses)
        elif interpolation == "spectral":
            if psi.spin_dims != 1 or not psi.grid.periodic:
                raise ValueError("spectral interpolation needs a spinless periodic wave function")
            self._hat = sfft.fftn(psi.amplitudes) / psi.grid.size
        else:
            raise ValueError(f"unknown interpolation {interpolation!r}")

    def __call__(self, points):
        """Return ``(velocities (P, D), ok (P,))``; ``ok`` is False near nodes."""
        points = np.atleast_2d(points)
        if self.interpolation == "trilinear":
            v = multilinear_interpolate(self.grid, self.v, points)
            rho = multilinear_interpolate(self.grid, self.rho, points)
        else:
            val = _fourier_eval(self._hat, self.grid, points)
            grads = np.stack([_fourier_eval(self._hat, self.grid, points, ax)
                              for ax in range(self.grid.n_axes)], axis=-1)
            rho = np.abs(val) ** 2
            v = np.imag(np.conj(val)[:, None] * grads) / np.where(rho > 0, rho, 1.0)[:, None]
            v = v / self._mass_axes
        return self.scale * v, rho > self.node_guard


def bohm_velocity(psi, Q, masses, node_guard=1e-12, interpolation="trilinear"):
    q = np.asarray(Q.positions if isinstance(Q, Configuration) else Q, dtype=float)
    v, ok = GuidanceField(psi, masses, node_guard, interpolation)(q[None, :])
    if not ok[0]:
        raise NodeProximity(f"|psi|^2 at {q} is below the node guard {node_guard}", psi.time)
    return v[0]


def dirac_velocity_1d(psi, Q, node_guard=1e-12):
    """Bohm-Dirac velocity ``psi^dag sigma_1 psi / psi^dag psi`` at ``Q``."""
    if psi.spin_dims != 2 or psi.grid.dim_per_particle != 1:
        raise WrongSpinDims("Bohm-Dirac velocity needs a 1D two-component spinor")
    if psi.grid.particles != 1:
        raise UnsupportedN("use relflash.hbd_velocity for two Dirac particles")
    a = psi.amplitudes
    j0 = np.sum(np.abs(a) ** 2, axis=-1)
    j1 = 2 * np.real(np.conj(a[:, 0]) * a[:, 1])
    safe = j0 > _DENSITY_FLOOR
    v = np.where(safe, j1 / np.where(safe, j0, 1.0), 0.0)
    q = np.atleast_1d(np.asarray(Q.positions if isinstance(Q, Configuration) else Q, dtype=float))
    rho = multilinear_interpolate(psi.grid, j0, q[None, :])[0]
    if not rho > node_guard:
        raise NodeProximity(f"psi^dag psi at {q} is below the node guard {node_guard}", psi.time)
    return float(multilinear_interpolate(psi.grid, v, q[None, :])[0])


# --- integration -----------------------------------------------------------

def step_schedule(T, dt, stops=()):
    """Step boundaries in (0, T]: multiples of dt plus requested stop times."""
    n = int(np.floor(T / dt + 1e-9))
    ts = {round(k * dt, 12) for k in range(1, n + 1)}
    ts.update(float(s) for s in stops if 0 < s <= T)
    ts.add(float(T))
    out = sorted(ts)
    # merge boundaries closer than a tiny fraction of dt
    merged = [out[0]]
    for t in out[1:]:
        if t - merged[-1] > 1e-9 * dt:
            merged.append(t)
        else:
            merged[-1] = t
    return merged


def rk_step(Q, h, f0, fh, f1, integrator="rk4"):
    """One explicit step using fields at the start, midpoint and end.

    Returns the new positions and a mask of configurations whose stages all
    stayed clear of nodes.
    """
    k1, ok1 = f0(Q)
    if integrator == "midpoint":
        k2, ok2 = fh(Q + 0.5 * h * k1)
        return Q + h * k2, ok1 & ok2
    k2, ok2 = fh(Q + 0.5 * h * k1)
    k3, ok3 = fh(Q + 0.5 * h * k2)
    k4, ok4 = f1(Q + h * k3)
    return Q + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), ok1 & ok2 & ok3 & ok4


class _HalfSteppers:
    """Cache of half-step propagators keyed by step length."""

    def __init__(self, grid, h):
        self.grid, self.h = grid, h
        self._cache = {}

    def __call__(self, psi, half):
        key = round(half, 14)
        if key not in self._cache:
            self._cache[key] = SchrodingerPropagator(self.grid, self.h, half)
        return self._cache[key].step(psi)


@dataclass
class EnsembleResult:
    positions: np.ndarray
    failed: np.ndarray
    failure_times: np.ndarray
    snapshots: dict = field(default_factory=dict)     # time -> positions (P, D)
    wavefunctions: dict = field(default_factory=dict)  # time -> WaveFunction
    history_times: list = None
    history: list = None
    psi: WaveFunction = None


def evolve_ensemble(psi0, h, Q0, cfg, T, times=(), record=False, velocity_scale=1.0):
    """Co-evolve psi and a batch of configurations to time ``psi0.time + T``.

    ``times`` are offsets from the start at which positions and psi are
    snapshotted (steps are cut to hit them exactly). Failed trajectories
    are frozen at their last good position.
    """
    masses = h.masses
    Q = psi0.grid.wrap(np.array(np.atleast_2d(Q0), dtype=float))
    P = Q.shape[0]
    failed = np.zeros(P, dtype=bool)
    failure_times = np.full(P, np.nan)
    res = EnsembleResult(Q, failed, failure_times)
    stops = set(round(float(s), 12) for s in times)
    if record:
        res.history_times, res.history = [psi0.time], [Q.copy()]
    if 0.0 in stops:
        res.snapshots[0.0] = Q.copy()
        res.wavefunctions[0.0] = psi0
    steppers = _HalfSteppers(psi0.grid, h)

    def field_of(psi):
        return GuidanceField(psi, masses, cfg.node_guard, cfg.interpolation, velocity_scale)

    psi = psi0
    f0 = field_of(psi)
    t_prev = 0.0
    for t_next in step_schedule(T, cfg.dt, stops):
        step = t_next - t_prev
        psi_half = steppers(psi, 0.5 * step)
        psi_next = steppers(psi_half, 0.5 * step)
        fh, f1 = field_of(psi_half), field_of(psi_next)
        alive = ~failed
        if np.any(alive):
            Qn, ok = rk_step(Q[alive], step, f0, fh, f1, cfg.integrator)
            idx = np.flatnonzero(alive)
            good, bad = idx[ok], idx[~ok]
            Q[good] = psi0.grid.wrap(Qn[ok])
            failed[bad] = True
            failure_times[bad] = psi0.time + t_prev
        psi, f0, t_prev = psi_next, f1, t_next
        key = round(t_next, 12)
        if key in stops:
            res.snapshots[key] = Q.copy()
            res.wavefunctions[key] = psi
        if record:
            res.history_times.append(psi.time)
            res.history.append(Q.copy())
    res.positions, res.psi = Q, psi
    return res


def advance_trajectory(psi0, h, Q0, cfg, T):
    """Integrate one Bohmian trajectory; returns ``(Trajectory, psi_T)``."""
    h.check(psi0.grid)
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    q0 = Q0.positions if isinstance(Q0, Configuration) else Q0
    res = evolve_ensemble(psi0, h, np.asarray(q0)[None, :], cfg, T, record=True)
    if res.failed[0]:
        raise NodeProximity(f"trajectory reached a node at t={res.failure_times[0]:.6g}",
                            float(res.failure_times[0]))
    traj = Trajectory()
    for t, q in zip(res.history_times, res.history):
        traj.append(t, q[0])
    return traj, res.psi


@dataclass
class EquivarianceReport:
    times: list
    ks: list
    critical: list
    passed: list
    n_samples: int
    n_failed: int
    level: float

    @property
    def failure_fraction(self):
        return self.n_failed / self.n_samples

    @property
    def all_passed(self):
        return all(self.passed)


def equivariance_statistic(psi0, h, n_samples, times, cfg, rng, axis=0, level=0.01,
                           velocity_scale=1.0, max_failure_fraction=0.01):
    """KS distance between evolved |psi_0|^2 samples and |psi_t|^2 at each time.

    ``axis`` picks the configuration coordinate whose marginal is tested.
    ``velocity_scale`` multiplies the guidance field; it exists so tests can
    confirm the statistic detects wrong dynamics.
    """
    if n_samples < 1000:
        raise ValueError("equivariance_statistic needs at least 1000 samples")
    times = sorted(float(t) for t in times)
    Q0 = sample_configurations(psi0, rng, n_samples)
    T = max(times[-1], cfg.dt) if times else cfg.dt
    res = evolve_ensemble(psi0, h, Q0, cfg, T, times=times, velocity_scale=velocity_scale)
    n_failed = int(res.failed.sum())
    if n_failed > max_failure_fraction * n_samples:
        raise TooManyFailures(f"{n_failed}/{n_samples} trajectories hit nodes")
    grid = psi0.grid
    particle, comp = divmod(axis, grid.dim_per_particle)
    ks, crit, passed = [], [], []
    for t in times:
        key = round(t, 12)
        psi_t = res.wavefunctions[key]
        marg = marginal_density(psi_t, particle)
        other = tuple(a for a in range(grid.dim_per_particle) if a != comp)
        line = marg.sum(axis=other) if other else marg
        x = res.snapshots[key][~res.failed, axis]
        r = ks_one_sample(x, cell_cdf(grid.axis(), line), level)
        ks.append(r.statistic)
        crit.append(r.critical)
        passed.append(r.passed)
    return EquivarianceReport(times, ks, crit, passed, n_samples, n_failed, level)
