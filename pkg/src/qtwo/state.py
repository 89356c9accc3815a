"""Discretised wave functions on configuration space.

Units are natural (hbar = 1). A configuration of ``N`` particles in ``d``
dimensions is a point of R^(N d); axis ``a`` of the configuration grid
belongs to particle ``a // d`` and spatial direction ``a % d``. Spin
indices, when present, are trailing array axes, one per particle.

The grid is cell centred: ``x_j = -L/2 + (j + 1/2) dx`` so that the cells
tile ``[-L/2, L/2)`` exactly. Quadrature everywhere is the plain cell sum
``sum(f) * dx**(N d)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooLarge, IncompatibleGrid, ZeroNorm

DEFAULT_MEMORY_BUDGET = 2**28  # complex values


@dataclass(frozen=True)
class GridSpec:
    dim_per_particle: int = 1
    particles: int = 1
    points_per_axis: int = 256
    extent_per_axis: float = 40.0
    boundary: str = "periodic"
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if not 1 <= self.dim_per_particle <= 3:
            raise ValueError(f"dim_per_particle must be 1..3, got {self.dim_per_particle}")
        if self.particles < 1:
            raise ValueError(f"particles must be >= 1, got {self.particles}")
        if self.points_per_axis < 8:
            raise ValueError(f"points_per_axis must be >= 8, got {self.points_per_axis}")
        if not self.extent_per_axis > 0:
            raise ValueError(f"extent_per_axis must be > 0, got {self.extent_per_axis}")
        if self.boundary not in ("periodic", "box"):
            raise ValueError(f"boundary must be 'periodic' or 'box', got {self.boundary!r}")
        if self.size > self.memory_budget:
            raise GridTooLarge(
                f"configuration grid has {self.size} points, budget is {self.memory_budget}"
            )

    @property
    def n_axes(self):
        return self.particles * self.dim_per_particle

    @property
    def spacing(self):
        return self.extent_per_axis / self.points_per_axis

    @property
    def cell_volume(self):
        return self.spacing**self.n_axes

    @property
    def shape(self):
        return (self.points_per_axis,) * self.n_axes

    @property
    def size(self):
        return self.points_per_axis**self.n_axes

    @property
    def periodic(self):
        return self.boundary == "periodic"

    def axis(self):
        n, dx = self.points_per_axis, self.spacing
        return -0.5 * self.extent_per_axis + (np.arange(n) + 0.5) * dx

    def momenta(self):
        return 2 * np.pi * np.fft.fftfreq(self.points_per_axis, self.spacing)

    def mesh(self):
        """Open mesh (one broadcastable coordinate array per axis)."""
        x = self.axis()
        return np.meshgrid(*([x] * self.n_axes), indexing="ij", sparse=True)

    def particle_axes(self, i):
        """Configuration axes of particle ``i`` (0-based)."""
        d = self.dim_per_particle
        return tuple(range(i * d, (i + 1) * d))

    def wrap(self, positions):
        """Map positions into the domain: periodic wrap or box clamp."""
        half = 0.5 * self.extent_per_axis
        positions = np.asarray(positions, dtype=float)
        if self.periodic:
            return (positions + half) % self.extent_per_axis - half
        return np.clip(positions, -half, half)

    def one_particle(self):
        return GridSpec(
            self.dim_per_particle, 1, self.points_per_axis, self.extent_per_axis,
            self.boundary, self.memory_budget,
        )


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: GridSpec
    amplitudes: np.ndarray
    spin_dims: int = 1
    time: float = 0.0

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        expected = self.grid.shape + self.spin_shape
        if a.shape != expected:
            raise IncompatibleGrid(f"amplitude shape {a.shape} does not match grid {expected}")
        if not np.all(np.isfinite(a)):
            raise ValueError("wave function has non-finite amplitudes")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @property
    def spin_shape(self):
        return (self.spin_dims,) * self.grid.particles if self.spin_dims > 1 else ()

    @property
    def spin_axes(self):
        return tuple(range(self.grid.n_axes, self.grid.n_axes + len(self.spin_shape)))

    @classmethod
    def from_function(cls, grid, f, spin_dims=1, time=0.0):
        """Sample ``f(*coords)`` on the grid (coords as an open mesh)."""
        values = np.asarray(f(*grid.mesh()), dtype=complex)
        shape = grid.shape + ((spin_dims,) * grid.particles if spin_dims > 1 else ())
        return cls(grid, np.broadcast_to(values, shape), spin_dims, time)

    def replace(self, amplitudes, time=None):
        return WaveFunction(self.grid, amplitudes, self.spin_dims, self.time if time is None else time)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.cell_volume))

    def inner(self, other):
        """Quadrature inner product <self|other>."""
        if other.grid != self.grid or other.spin_dims != self.spin_dims:
            raise IncompatibleGrid("inner product of wave functions on different grids")
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class Configuration:
    positions: np.ndarray

    def __post_init__(self):
        p = np.array(self.positions, dtype=float).reshape(-1)
        p.flags.writeable = False
        object.__setattr__(self, "positions", p)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)

    def append(self, t, q):
        if self.times and not t > self.times[-1]:
            raise ValueError(f"trajectory times must increase ({t} after {self.times[-1]})")
        self.times.append(float(t))
        self.positions.append(np.array(q, dtype=float))

    @property
    def samples(self):
        return [(t, Configuration(q)) for t, q in zip(self.times, self.positions)]

    def as_array(self):
        return np.asarray(self.times), np.asarray(self.positions)


def normalize(psi):
    n = psi.norm()
    if not n > 1e-300:
        raise ZeroNorm(f"cannot normalize a wave function of norm {n}")
    if n == 1.0:
        return psi
    return psi.replace(psi.amplitudes / n)


def probability_density(psi):
    rho = np.abs(psi.amplitudes) ** 2
    if psi.spin_axes:
        rho = rho.sum(axis=psi.spin_axes)
    return rho


def marginal_density(psi, particle):
    """Marginal |psi|^2 density of one particle's coordinates (0-based index)."""
    rho = probability_density(psi)
    keep = psi.grid.particle_axes(particle)
    others = tuple(a for a in range(psi.grid.n_axes) if a not in keep)
    d = psi.grid.dim_per_particle
    return rho.sum(axis=others) * psi.grid.spacing ** (psi.grid.n_axes - d)


def inverse_cdf_sample(weights, rng, size=None):
    """Draw flattened cell indices with probability proportional to ``weights``."""
    w = np.asarray(weights, dtype=float).ravel()
    cdf = np.cumsum(w)
    total = cdf[-1]
    if not total > 1e-300:
        raise ZeroNorm("sampling weights sum to zero")
    n = 1 if size is None else size
    idx = np.searchsorted(cdf, rng.random(n) * total, side="right")
    idx = np.minimum(idx, w.size - 1)
    return int(idx[0]) if size is None else idx


def sample_configurations(psi, rng, n):
    """Draw ``n`` configurations from the cell-discretised |psi|^2."""
    grid = psi.grid
    idx = inverse_cdf_sample(probability_density(psi), rng, n)
    multi = np.stack(np.unravel_index(idx, grid.shape), axis=-1)
    jitter = rng.random((n, grid.n_axes)) - 0.5
    x = grid.axis()
    return grid.wrap(x[multi] + jitter * grid.spacing)


def sample_configuration(psi, rng):
    return Configuration(sample_configurations(psi, rng, 1)[0])
