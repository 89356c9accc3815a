"""Dispatch a validated configuration to its model and write the outputs.

Per-run models (GRW, flash sampling) give each run its own child stream
spawned from the seed, so results do not depend on the worker count.
Ensemble models that share one evolving wave function across runs (Bohm,
both Bell-type processes) advance all runs together on the root stream.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..belltype import (HybridModel, LatticeHamiltonian, SectoredState, hybrid_state,
                        local_creation_interaction, random_interaction, random_state,
                        sample_hybrid_configurations, simulate_hybrid_ensemble,
                        simulate_pure_jump_ensemble)
from ..bohm import BohmRunConfig, evolve_ensemble
from ..errors import SimulationError
from ..grw import GrwParams, run_grw
from ..relflash import MultiTimeWaveFunction, SeedFlash, SpacetimePoint, run_sf
from ..rng import make_rng, spawn
from ..state import (GridSpec, WaveFunction, inverse_cdf_sample, marginal_density, normalize,
                     sample_configurations)
from ..stats import binomial_within, cell_cdf, chi_square, ks_one_sample
from ..unitary import HamiltonianSpec, positive_energy_projection
from .records import file_sha256, write_json, write_records

OUT_ENV = "QTWO_OUT"


class RunFailure(SimulationError):
    """Failure fraction above the configured threshold."""


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    seed: int
    model: str
    wall_time_s: float
    failures: dict
    outputs: list
    statistics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    out_dir: str = ""

    @property
    def failed(self):
        return self.failures["fraction"] > self.failures["threshold"]

    def as_dict(self):
        d = dict(self.__dict__)
        d.pop("wall_time_s")  # kept out of the file so outputs are byte-identical
        d.pop("out_dir")
        return d


# --- initial states --------------------------------------------------------

def gaussian_terms(grid, terms, spin_dims=1):
    """Sum of product Gaussians; ``width`` is the std of |psi|^2 per axis."""
    mesh = grid.mesh()
    total = 0
    for term in terms:
        c = term["center"]
        p = term.get("momentum") or [0.0] * len(c)
        w = float(term.get("width", 1.0))
        f = float(term.get("weight", 1.0))
        for a, x in enumerate(mesh):
            f = f * np.exp(-(x - c[a]) ** 2 / (4 * w * w) + 1j * p[a] * x)
        total = total + f
    amps = np.broadcast_to(total, grid.shape)
    if spin_dims > 1:
        spinor = np.asarray(terms[0].get("spinor") or [1.0, 0.0], dtype=complex)
        amps = amps[..., None] * spinor
    return normalize(WaveFunction(grid, amps, spin_dims))


def _harmonic(grid, masses, omega):
    if omega == 0:
        return None
    V = 0
    d = grid.dim_per_particle
    for a, x in enumerate(grid.mesh()):
        V = V + 0.5 * masses[a // d] * omega**2 * x**2
    return np.broadcast_to(V, grid.shape)


def _density_record(t, grid, values):
    return {
        "t": float(t),
        "grid": {"dim": grid.dim_per_particle, "points": grid.points_per_axis,
                 "extent": grid.extent_per_axis, "first": float(grid.axis()[0])},
        "values": np.asarray(values, dtype=float).ravel().tolist(),
    }


def _times(cfg, T):
    return sorted(set([0.0] + [float(s) for s in cfg.snapshots] + [float(T)]))


# --- models ----------------------------------------------------------------

def _run_bohm(cfg, p, threads):
    grid = GridSpec(p.dim, len(p.masses), p.grid.points, p.grid.extent, p.grid.boundary)
    h = HamiltonianSpec(p.masses, _harmonic(grid, p.masses, p.harmonic_omega))
    psi0 = gaussian_terms(grid, p.initial)
    rng = make_rng(cfg.seed)
    Q0 = sample_configurations(psi0, rng, p.runs)
    rcfg = BohmRunConfig(p.dt, p.integrator, p.node_guard, p.interpolation)
    times = _times(cfg, p.T)
    res = evolve_ensemble(psi0, h, Q0, rcfg, p.T, times=times)
    traj, dens, stats = [], [], {}
    alive = ~res.failed
    for t in times:
        key = round(t, 12)
        Q = res.snapshots[key]
        for r in range(p.runs):
            traj.append({"run": r, "t": t, "q": Q[r].tolist()})
        psi_t = res.wavefunctions[key]
        line = marginal_density(psi_t, 0)
        if p.dim > 1:
            line = line.sum(axis=tuple(range(1, p.dim)))
        dens.append(_density_record(t, grid.one_particle(),
                                    sum(marginal_density(psi_t, i) for i in range(grid.particles))))
        if alive.sum() and t > 0:
            ks = ks_one_sample(Q[alive, 0], cell_cdf(grid.axis(), line), 0.01, f"equivariance_t={t:g}")
            stats[ks.name] = {"statistic": ks.statistic, "critical": ks.critical,
                              "level": ks.level, "passed": ks.passed}
    return {"trajectories": traj, "density": dens}, int(res.failed.sum()), p.runs, stats


_WORKER_CACHE = {}


def _grw_setup(cfg):
    key = cfg.hash()
    if key not in _WORKER_CACHE:
        p = cfg.params
        grid = GridSpec(p.dim, len(p.masses), p.grid.points, p.grid.extent, p.grid.boundary)
        h = HamiltonianSpec(p.masses, _harmonic(grid, p.masses, p.harmonic_omega))
        params = GrwParams(p.lam, p.sigma, p.lambda_mode, p.m_ref)
        _WORKER_CACHE.clear()
        _WORKER_CACHE[key] = (grid, h, params, gaussian_terms(grid, p.initial))
    return _WORKER_CACHE[key]


def _grw_worker(args):
    cfg, run, rng = args
    grid, h, params, psi0 = _grw_setup(cfg)
    p = cfg.params
    try:
        rec = run_grw(psi0, h, params, p.T, snapshot_times=cfg.snapshots, rng=rng, dt=p.dt)
    except SimulationError as exc:
        return run, None, None, f"{type(exc).__name__}: {exc}"
    flashes = [{"run": run, "t": f.time, "x": list(f.center), "label": f.label} for f in rec.flashes]
    return run, flashes, {t: rec.densities[t] for t in rec.densities}, None


def _pool_map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def _run_grw(cfg, p, threads):
    streams = spawn(cfg.seed, p.runs)
    results = _pool_map(_grw_worker, [(cfg, r, streams[r]) for r in range(p.runs)], threads)
    flashes, errors, counts = [], [], []
    dens_sum = {}
    for run, fl, dens, err in results:
        if err:
            errors.append({"run": run, "error": err})
            continue
        flashes.extend(fl)
        counts.append(len(fl))
        for t, d in dens.items():
            dens_sum[t] = dens_sum.get(t, 0) + d
    grid = _grw_setup(cfg)[0].one_particle()
    ok = len(counts)
    dens = [_density_record(t, grid, d / ok) for t, d in sorted(dens_sum.items())] if ok else []
    N = len(p.masses)
    expected = (N * p.lam if p.lambda_mode == "uniform"
                else p.lam * sum(p.masses) / (p.m_ref or min(p.masses))) * p.T
    counts = np.asarray(counts, dtype=float)
    stats = {"failed_runs": errors[:20]}
    if ok:
        band = 3 * np.sqrt(expected / ok)
        stats["flash_count"] = {
            "mean": float(counts.mean()), "variance": float(counts.var(ddof=1)) if ok > 1 else 0.0,
            "expected": expected, "band_3se": float(band),
            "mean_in_band": bool(abs(counts.mean() - expected) <= band),
        }
    return {"flashes": flashes, "density": dens}, len(errors), p.runs, stats


def _run_bell_pure(cfg, p, threads):
    from ..belltype import LatticeSpec

    lattice = LatticeSpec(p.sites, p.max_particles)
    inst = make_rng(p.instance_seed)
    if p.interaction == "random":
        HI = random_interaction(lattice, inst, p.coupling, hopping=p.hopping != 0)
    else:
        HI = local_creation_interaction(lattice, p.coupling, p.hopping)
    H = LatticeHamiltonian.with_chemical_potential(HI, p.chemical_potential)
    if p.initial == "random":
        psi0 = random_state(lattice, inst)
    else:
        psi0 = SectoredState.from_dict(lattice, {(): 1.0})
    rng = make_rng(cfg.seed)
    Q0 = inverse_cdf_sample(psi0.probabilities(), rng, p.runs)
    times = _times(cfg, p.T)
    ens = simulate_pure_jump_ensemble(psi0, H, Q0, p.T, p.dt, rng, times=times)
    traj = []
    for t in times:
        Q = ens.snapshots[round(t, 12)]
        for r in range(p.runs):
            traj.append({"run": r, "t": t, "q": [float(s) for s in lattice.configurations[Q[r]]]})
    counts = np.bincount(ens.final, minlength=lattice.dimension)
    chi = chi_square(counts, ens.states[round(p.T, 12)].probabilities(), 0.001, name="occupancy_at_T")
    stats = {"occupancy_at_T": {"statistic": chi.statistic, "critical": chi.critical,
                                "level": chi.level, "passed": chi.passed, **chi.detail},
             "mean_jumps": float(ens.n_jumps.mean())}
    return {"trajectories": traj}, 0, p.runs, stats


def _run_bell_hybrid(cfg, p, threads):
    model = HybridModel(p.points, p.extent, p.mass, p.coupling, p.width)
    term = p.initial
    c, w = term["center"][0], term.get("width", 1.0)
    k = (term.get("momentum") or [0.0])[0]
    state0 = hybrid_state(model, lambda x: np.exp(-(x - c) ** 2 / (4 * w * w) + 1j * k * x))
    rng = make_rng(cfg.seed)
    sectors, Q = sample_hybrid_configurations(state0, rng, p.runs)
    times = _times(cfg, p.T)
    rcfg = BohmRunConfig(p.dt, node_guard=p.node_guard)
    res = simulate_hybrid_ensemble(state0, model, sectors, Q, p.T, rcfg, rng, times=times)
    traj, stats = [], {}
    for t in times:
        secs, pos = res.snapshots[round(t, 12)]
        for r in range(p.runs):
            traj.append({"run": r, "t": t, "q": pos[r, :secs[r]].tolist()})
        w2 = res.states[round(t, 12)].sector_weights()[1]
        b = binomial_within(int((secs == 2).sum()), p.runs, float(w2), 3.0, f"sector2_t={t:g}")
        stats[b.name] = {"statistic": b.statistic, "critical": b.critical, "level": b.level,
                         "passed": b.passed, **b.detail}
    return {"trajectories": traj}, int(res.failed.sum()), p.runs, stats


def _sf_setup(cfg):
    key = cfg.hash()
    if key not in _WORKER_CACHE:
        p = cfg.params
        N = len(p.masses)
        g1 = GridSpec(1, 1, p.grid.points, p.grid.extent)
        factors = []
        for pk, m in zip(p.packets, p.masses):
            f = gaussian_terms(g1, [pk], spin_dims=2)
            if p.positive_energy:
                f = normalize(positive_energy_projection(f, m))
            factors.append(f.amplitudes)
        if N == 1:
            psi = WaveFunction(g1, factors[0], 2)
        else:
            g2 = GridSpec(1, 2, p.grid.points, p.grid.extent)
            psi = WaveFunction(g2, np.einsum("ia,jb->ijab", factors[0], factors[1]), 2)
        seeds = [SeedFlash(SpacetimePoint(s["t"], s["x"]),
                           (float(np.sqrt(1 + s.get("u1", 0.0) ** 2)), float(s.get("u1", 0.0))),
                           s["label"]) for s in p.seeds]
        _WORKER_CACHE.clear()
        _WORKER_CACHE[key] = (MultiTimeWaveFunction(psi, p.masses), seeds)
    return _WORKER_CACHE[key]


def _sf_worker(args):
    cfg, run, rng = args
    psi, seeds = _sf_setup(cfg)
    p = cfg.params
    try:
        rec = run_sf(psi, seeds, p.lam, p.generations, p.order, rng, p.chi_max, p.rapidity_cells)
    except SimulationError as exc:
        return run, None, 0, [], f"{type(exc).__name__}: {exc}"
    flashes = [{"run": run, "t": f.point.t, "x": [f.point.x], "label": f.label} for f in rec.flashes]
    return run, flashes, len(rec.causal_violations()), list(rec.cut_masses), None


def _run_sf_flash(cfg, p, threads):
    streams = spawn(cfg.seed, p.runs)
    results = _pool_map(_sf_worker, [(cfg, r, streams[r]) for r in range(p.runs)], threads)
    flashes, errors, violations, cut = [], [], 0, []
    for run, fl, bad, cm, err in results:
        if err:
            errors.append({"run": run, "error": err})
            continue
        flashes.extend(fl)
        violations += bad
        cut.extend(cm)
    cut = np.asarray(cut)
    stats = {"causal_violations": violations, "flashes": len(flashes),
             "max_cut_mass": float(cut.max()) if cut.size else 0.0,
             "cut_mass_above_1e-3": float((cut > 1e-3).mean()) if cut.size else 0.0,
             "failed_runs": errors[:20]}
    return {"flashes": flashes}, len(errors), p.runs, stats


RUNNERS = {
    "bohm": _run_bohm,
    "grw": _run_grw,
    "bell_pure": _run_bell_pure,
    "bell_hybrid": _run_bell_hybrid,
    "sf_flash": _run_sf_flash,
}

KINDS = {"flashes": "flash", "trajectories": "trajectory", "density": "density"}


def output_dir(cfg):
    if cfg.output.dir:
        return Path(cfg.output.dir)
    return Path(os.environ.get(OUT_ENV, "runs")) / f"{cfg.model}-{cfg.hash()[:12]}"


def run_experiment(cfg, out=None):
    """Run ``cfg`` and write ``<name>.jsonl`` files, ``manifest.json`` and ``timing.json``."""
    out = Path(out) if out else output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        outputs, n_failed, n_runs, stats = RUNNERS[cfg.model](cfg, cfg.params, cfg.threads)
    except SimulationError as exc:
        raise RunFailure(f"{cfg.model} run (seed {cfg.seed}) failed: "
                         f"{type(exc).__name__}: {exc}") from exc
    index = []
    for name in sorted(outputs):
        if name == "density" and not cfg.output.densities:
            continue
        path = out / f"{name}.jsonl"
        n = write_records(outputs[name], path, KINDS[name])
        index.append({"file": path.name, "kind": KINDS[name], "records": n,
                      "sha256": file_sha256(path)})
    wall = time.perf_counter() - start
    manifest = RunManifest(
        config_hash=cfg.hash(), code_version=__version__, seed=cfg.seed, model=cfg.model,
        wall_time_s=wall,
        failures={"count": n_failed, "runs": n_runs, "fraction": n_failed / n_runs,
                  "threshold": cfg.params.max_failure_fraction},
        outputs=index, statistics=stats, config=cfg.resolved(), out_dir=str(out),
    )
    write_json(manifest.as_dict(), out / "manifest.json")
    write_json({"wall_time_s": wall, "threads": cfg.threads}, out / "timing.json")
    return manifest
