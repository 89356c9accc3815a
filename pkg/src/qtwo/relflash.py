"""Relativistic flashes and hypersurface Bohm-Dirac guidance in 1+1D.

Metric signature (+, -), c = 1. Each particle carries a two-component
spinor with Hamiltonian ``k sigma_1 + m sigma_3``, so gamma^0 = sigma_3 and
gamma^1 = i sigma_2, and the current of one particle is
``j^mu = psi^dag A_mu psi`` with ``A_0 = 1``, ``A_1 = sigma_1``. The
N-particle current is the tensor product of these.

A multi-time wave function of non-interacting particles is evaluated
exactly from its Fourier coefficients on the initial surface, advancing
each particle's momentum modes by its own time argument.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import (DegenerateDensity, NodeProximity, UnsupportedN, Unreachable,
                     WrongSpinDims)
from .state import inverse_cdf_sample
from .unitary import dirac_mode_propagator

CHI_MAX = 5.0
DENSITY_FLOOR = 1e-300

_A = np.array([[[1, 0], [0, 1]], [[0, 1], [1, 0]]], dtype=complex)


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    x: float

    def __post_init__(self):
        if not (np.isfinite(self.t) and np.isfinite(self.x)):
            raise ValueError("spacetime point must be finite")

    def interval_to(self, other):
        """Squared interval ``(dt)^2 - (dx)^2`` from self to ``other``."""
        return (other.t - self.t) ** 2 - (other.x - self.x) ** 2

    def in_future_cone_of(self, other):
        """True if self lies strictly inside the future light cone of ``other``."""
        return self.t > other.t and other.interval_to(self) > 0


def _unit_timelike(u):
    u = np.asarray(u, dtype=float)
    if u.shape != (2,) or not u[0] > 0 or abs(u[0] - np.sqrt(1 + u[1] ** 2)) > 1e-12:
        raise ValueError(f"u={u} is not a future-pointing unit timelike vector")
    return u


def _lower(u):
    return np.array([u[0], -u[1]])


@dataclass(frozen=True)
class SeedFlash:
    point: SpacetimePoint
    u: tuple = (1.0, 0.0)
    label: int = 1

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(_unit_timelike(self.u)))


@dataclass(frozen=True)
class Flash:
    point: SpacetimePoint
    u: tuple
    label: int
    generation: int

    def record(self):
        return {"t": self.point.t, "x": [self.point.x], "label": self.label}


@dataclass
class FlashRecord:
    seeds: list = field(default_factory=list)
    flashes: list = field(default_factory=list)
    cut_masses: list = field(default_factory=list)

    @property
    def generations(self):
        out = {}
        for f in self.flashes:
            out.setdefault(f.generation, []).append(f)
        return [out[g] for g in sorted(out)]

    def by_label(self, label):
        return [f for f in self.flashes if f.label == label]

    def causal_violations(self):
        """Flashes not strictly in the timelike future of their predecessor."""
        last = {s.label: s.point for s in self.seeds}
        bad = []
        for f in self.flashes:
            if not f.point.in_future_cone_of(last[f.label]):
                bad.append(f)
            last[f.label] = f.point
        return bad


class MultiTimeWaveFunction:
    """Non-interacting Dirac wave function of N = 1 or 2 particles in 1+1D.

    Built from a spinor ``WaveFunction`` on a periodic grid at a common
    time ``t0``. Outside ``[-L/2, L/2)`` the function is taken to vanish.
    """

    def __init__(self, psi0, masses):
        grid = psi0.grid
        if psi0.spin_dims != 2 or grid.dim_per_particle != 1:
            raise WrongSpinDims("multi-time Dirac functions need 1D two-component spinors")
        if grid.particles not in (1, 2):
            raise UnsupportedN(f"only N = 1 or 2 particles, got {grid.particles}")
        if not grid.periodic:
            raise ValueError("multi-time evaluation needs a periodic grid")
        self.grid = grid
        self.N = grid.particles
        self.masses = tuple(float(m) for m in np.broadcast_to(masses, (self.N,)))
        self.t0 = psi0.time
        axes = tuple(range(self.N))
        self.hat = sfft.fftn(psi0.amplitudes, axes=axes) / grid.size
        self.k = grid.momenta()
        self.x0 = grid.axis()[0]
        self.half = 0.5 * grid.extent_per_axis

    def _modes(self, particle, t, x):
        """Propagated Fourier factors ``U(k, t - t0) e^{ik(x - x0)}``: (P, n, 2, 2)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(t < self.t0 - 1e-12):
            raise Unreachable(f"time {t.min()} precedes the initial surface t0={self.t0}")
        U = dirac_mode_propagator(self.k[None, :], self.masses[particle], (t - self.t0)[:, None])
        phase = np.exp(1j * self.k[None, :] * (x - self.x0)[:, None])
        inside = (np.abs(x) <= self.half)[:, None, None, None]
        return np.where(inside, U * phase[..., None, None], 0.0)

    def evaluate(self, points):
        """Spinor value at one spacetime point per particle."""
        if len(points) != self.N:
            raise ValueError(f"need {self.N} points")
        if self.N == 1:
            return self.along(1, {}, [points[0].t], [points[0].x])[0]
        return self.along(1, {2: points[1]}, [points[0].t], [points[0].x])[0]

    def along(self, label, others, t, x):
        """Values with particle ``label`` at ``(t[i], x[i])`` and the others fixed.

        ``others`` maps each remaining label to a SpacetimePoint. Returns
        shape ``(P,) + spin shape`` with spin axes in particle order.
        """
        i = label - 1
        if self.N == 1:
            M = self._modes(0, t, x)
            return np.einsum("pkab,kb->pa", M, self.hat)
        j = 1 - i
        o = others[j + 1]
        Mo = self._modes(j, [o.t], [o.x])[0]
        # contract the fixed particle first: phi[k_i, s_i, s_j]
        if i == 0:
            phi = np.einsum("qbd,kqad->kab", Mo, self.hat)
            return np.einsum("pkac,kcb->pab", self._modes(0, t, x), phi)
        phi = np.einsum("kac,kqcb->qab", Mo, self.hat)
        return np.einsum("pqbd,qad->pab", self._modes(1, t, x), phi)


def current_tensor(values):
    """Real current ``j^{mu...}`` for spinor values of shape ``(P,) + (2,)*N``."""
    v = np.asarray(values)
    if v.ndim == 2:
        return np.real(np.einsum("pa,mab,pb->pm", v.conj(), _A, v))
    return np.real(np.einsum("pab,mac,nbd,pcd->pmn", v.conj(), _A, _A, v))


def multitime_current(psi, x1, x2=None):
    """``j^{mu nu}(x1, x2)`` (or ``j^mu(x1)`` for one particle)."""
    points = [x1] if psi.N == 1 else [x1, x2]
    return current_tensor(psi.evaluate(points)[None])[0]


def hbd_velocity(psi, X1, X2, node_guard=1e-12):
    """Guidance velocities on the flat leaf through X1 and X2."""
    if psi.N != 2:
        raise UnsupportedN("hbd_velocity is defined here for two particles")
    if abs(X1.t - X2.t) > 1e-12:
        raise ValueError("both points must lie on a common constant-t leaf")
    j = multitime_current(psi, X1, X2)
    if not j[0, 0] > node_guard:
        raise NodeProximity(f"j^00 = {j[0, 0]:.3g} below the node guard", X1.t)
    return j[1, 0] / j[0, 0], j[0, 1] / j[0, 0]


@dataclass
class FlashDensity:
    """Discretised flash density over rapidity on one hyperbola."""
    origin: SpacetimePoint
    T: float
    edges: np.ndarray
    weights: np.ndarray       # probability per rapidity cell, sums to 1
    normalizer: float         # 1 / integral over [-chi_max, chi_max]
    cut_mass: float

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self):
        return self.weights / np.diff(self.edges)

    def point(self, chi):
        return SpacetimePoint(float(self.origin.t + self.T * np.cosh(chi)),
                              float(self.origin.x + self.T * np.sinh(chi)))

    def sample_rapidity(self, rng, size=None):
        idx = inverse_cdf_sample(self.weights, rng, size)
        lo, hi = self.edges[idx], self.edges[np.asarray(idx) + 1]
        return lo + (hi - lo) * rng.random(None if size is None else np.shape(idx))


def _surface_integrand(psi, label, origin, T, others_u, others_pts, chi):
    t = origin.t + T * np.cosh(chi)
    x = origin.x + T * np.sinh(chi)
    n_lower = np.stack([np.cosh(chi), -np.sinh(chi)], axis=-1)
    j = current_tensor(psi.along(label, others_pts, t, x))
    if psi.N == 1:
        c = np.einsum("pm,pm->p", j, n_lower)
    elif label == 1:
        c = np.einsum("pmn,pm,n->p", j, n_lower, _lower(others_u[2]))
    else:
        c = np.einsum("pmn,m,pn->p", j, _lower(others_u[1]), n_lower)
    return np.clip(c, 0.0, None) * T  # Vol = T dchi


def flash_density(psi, label, origin, T, others=None, chi_max=CHI_MAX, n_cells=2000):
    """Density of the next ``label`` flash on the hyperbola of timelike distance T.

    ``others`` maps the remaining labels to their latest ``(point, u)``.
    The cut mass is the fraction of the density beyond ``|chi| > chi_max``,
    estimated on the extended range up to where the hyperbola leaves the box.
    """
    if not T > 0:
        raise ValueError("timelike distance T must be > 0")
    others = others or {}
    pts = {k: p for k, (p, _) in others.items()}
    us = {k: np.asarray(u, dtype=float) for k, (_, u) in others.items()}
    edges = np.linspace(-chi_max, chi_max, n_cells + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    f = _surface_integrand(psi, label, origin, T, us, pts, mid)
    total = float(np.sum(f * np.diff(edges)))
    if not (np.isfinite(total) and total > DENSITY_FLOOR):
        raise DegenerateDensity(f"flash density integral {total:.3g} on T={T:.4g} from {origin}")
    reach = np.arcsinh((psi.half + abs(origin.x)) / T)
    cut = 0.0
    if reach > chi_max:
        dchi = edges[1] - edges[0]
        n_out = int(np.ceil((reach - chi_max) / dchi))
        side = chi_max + (np.arange(n_out) + 0.5) * dchi
        tail = _surface_integrand(psi, label, origin, T, us, pts, np.concatenate([-side, side]))
        tail_mass = float(tail.sum() * dchi)
        cut = tail_mass / (tail_mass + total)
    w = f * np.diff(edges)
    return FlashDensity(origin, float(T), edges, w / w.sum(), 1.0 / total, cut)


def sample_next_flash(label, latest, psi, lam, rng, chi_max=CHI_MAX, n_cells=2000):
    """Next flash of ``label`` given the latest ``{label: (point, u)}`` of every label.

    Returns ``(point, u, density)``.
    """
    T = float(rng.exponential(1.0 / lam))
    origin = latest[label][0]
    others = {k: v for k, v in latest.items() if k != label}
    dens = flash_density(psi, label, origin, T, others, chi_max, n_cells)
    chi = float(dens.sample_rapidity(rng))
    return dens.point(chi), (float(np.cosh(chi)), float(np.sinh(chi))), dens


def run_sf(psi, seeds, lam, n_generations, order="round_robin", rng=None,
           chi_max=CHI_MAX, n_cells=2000):
    """Generate flashes generation by generation.

    ``round_robin`` visits labels 1..N in turn, one generation per sweep;
    ``random_label`` picks the label uniformly each step and counts each
    step as its own generation. Every sample uses the latest flash of the
    other labels, including ones produced earlier in the same sweep.
    """
    if not lam > 0:
        raise ValueError("flash rate lambda must be > 0")
    if n_generations < 1:
        raise ValueError("n_generations must be >= 1")
    if order not in ("round_robin", "random_label"):
        raise ValueError(f"unknown order {order!r}")
    labels = sorted(s.label for s in seeds)
    if labels != list(range(1, psi.N + 1)):
        raise ValueError(f"need exactly one seed per label 1..{psi.N}")
    latest = {s.label: (s.point, s.u) for s in seeds}
    rec = FlashRecord(seeds=sorted(seeds, key=lambda s: s.label))
    for g in range(1, n_generations + 1):
        sweep = labels if order == "round_robin" else [int(rng.integers(1, psi.N + 1))]
        for k in sweep:
            point, u, dens = sample_next_flash(k, latest, psi, lam, rng, chi_max, n_cells)
            latest[k] = (point, u)
            rec.flashes.append(Flash(point, u, k, g))
            rec.cut_masses.append(dens.cut_mass)
    return rec
