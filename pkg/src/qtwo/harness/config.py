"""Experiment configuration: YAML in, validated dataclasses out.

Every block is a dataclass whose fields mirror the YAML keys. Validation
walks the whole document and reports every problem at once.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import yaml

MODELS = ("bohm", "grw", "bell_pure", "bell_hybrid", "sf_flash")


class ParseError(Exception):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line, self.column = line, column


class ValidationError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def rule(check, message, key=None, **kw):
    meta = {"check": check, "message": message}
    if key:
        meta["key"] = key  # YAML key when it is not a valid identifier
    return field(metadata=meta, **kw)


def _yaml_key(f):
    return f.metadata.get("key", f.name)


def block_to_dict(obj):
    """Dataclass block to a plain dict keyed by YAML names."""
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        out[_yaml_key(f)] = block_to_dict(v) if dataclasses.is_dataclass(v) else v
    return out


# --- shared blocks ---------------------------------------------------------

@dataclass
class GaussianTerm:
    center: list
    width: float = 1.0
    momentum: Optional[list] = None
    weight: float = 1.0
    spinor: Optional[list] = None  # Dirac models: two real components

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be > 0")


@dataclass
class GridBlock:
    points: int = rule(lambda v: v >= 8, "must be >= 8", default=256)
    extent: float = rule(_positive, "must be > 0", default=40.0)
    boundary: str = rule(lambda v: v in ("periodic", "box"), "must be 'periodic' or 'box'",
                         default="periodic")


@dataclass
class BohmBlock:
    grid: GridBlock = field(default_factory=GridBlock)
    masses: list = field(default_factory=lambda: [1.0])
    dim: int = rule(lambda v: 1 <= v <= 3, "must be 1, 2 or 3", default=1)
    initial: list = field(default_factory=lambda: [{"center": [0.0]}])
    harmonic_omega: float = rule(_nonneg, "must be >= 0", default=0.0)
    dt: float = rule(_positive, "must be > 0", default=0.01)
    integrator: str = rule(lambda v: v in ("rk4", "midpoint"), "must be rk4 or midpoint",
                           default="rk4")
    interpolation: str = rule(lambda v: v in ("trilinear", "spectral"),
                              "must be trilinear or spectral", default="trilinear")
    node_guard: float = rule(_positive, "must be > 0", default=1e-12)
    T: float = rule(_positive, "must be > 0", default=1.0)
    runs: int = rule(_positive, "must be >= 1", default=1000)
    max_failure_fraction: float = rule(lambda v: 0 <= v <= 1, "must lie in [0, 1]", default=0.01)


@dataclass
class GrwBlock:
    grid: GridBlock = field(default_factory=lambda: GridBlock(points=8, extent=12.0))
    masses: list = field(default_factory=lambda: [1.0] * 5)
    dim: int = rule(lambda v: 1 <= v <= 3, "must be 1, 2 or 3", default=1)
    initial: list = field(default_factory=lambda: [{"center": [0.0] * 5, "width": 1.0}])
    lam: float = rule(_positive, "must be > 0", key="lambda", default=1.0)
    sigma: float = rule(_positive, "must be > 0", default=3.0)
    lambda_mode: str = rule(lambda v: v in ("uniform", "mass_proportional"),
                            "must be uniform or mass_proportional", default="uniform")
    m_ref: Optional[float] = rule(lambda v: v is None or v > 0, "must be > 0", default=None)
    harmonic_omega: float = rule(_nonneg, "must be >= 0", default=0.0)
    dt: float = rule(_positive, "must be > 0", default=0.01)
    T: float = rule(_positive, "must be > 0", default=100.0)
    runs: int = rule(_positive, "must be >= 1", default=1000)
    max_failure_fraction: float = rule(lambda v: 0 <= v <= 1, "must lie in [0, 1]", default=0.01)


@dataclass
class BellPureBlock:
    sites: int = rule(lambda v: v >= 2, "must be >= 2", default=8)
    max_particles: int = rule(_nonneg, "must be >= 0", default=3)
    interaction: str = rule(lambda v: v in ("local", "random"), "must be local or random",
                            default="random")
    coupling: float = rule(_nonneg, "must be >= 0", default=1.0)
    hopping: float = 0.0
    chemical_potential: float = 0.0
    initial: str = rule(lambda v: v in ("random", "vacuum"), "must be random or vacuum",
                        default="random")
    instance_seed: int = rule(_nonneg, "must be >= 0", default=0)
    dt: float = rule(_positive, "must be > 0", default=0.01)
    T: float = rule(_positive, "must be > 0", default=2.0)
    runs: int = rule(_positive, "must be >= 1", default=10000)
    max_failure_fraction: float = rule(lambda v: 0 <= v <= 1, "must lie in [0, 1]", default=0.0)


@dataclass
class BellHybridBlock:
    points: int = rule(lambda v: v >= 8, "must be >= 8", default=64)
    extent: float = rule(_positive, "must be > 0", default=20.0)
    mass: float = rule(_positive, "must be > 0", default=1.0)
    coupling: float = rule(_nonneg, "must be >= 0", default=0.4)
    width: float = rule(_positive, "must be > 0", default=1.0)
    initial: dict = field(default_factory=lambda: {"center": [0.0], "width": 1.41, "momentum": [0.5]})
    dt: float = rule(_positive, "must be > 0", default=0.01)
    node_guard: float = rule(_positive, "must be > 0", default=1e-12)
    T: float = rule(_positive, "must be > 0", default=1.5)
    runs: int = rule(_positive, "must be >= 1", default=1000)
    max_failure_fraction: float = rule(lambda v: 0 <= v <= 1, "must lie in [0, 1]", default=0.01)


@dataclass
class SfFlashBlock:
    grid: GridBlock = field(default_factory=lambda: GridBlock(points=128, extent=40.0))
    masses: list = field(default_factory=lambda: [1.0, 1.0])
    packets: list = field(default_factory=lambda: [
        {"center": [-3.0], "width": 1.5, "momentum": [0.3], "spinor": [1.0, 0.0]},
        {"center": [3.0], "width": 1.5, "momentum": [-0.3], "spinor": [1.0, 0.0]},
    ])
    positive_energy: bool = True
    seeds: list = field(default_factory=lambda: [
        {"t": 0.0, "x": -3.0, "u1": 0.0, "label": 1},
        {"t": 0.0, "x": 3.0, "u1": 0.0, "label": 2},
    ])
    lam: float = rule(_positive, "must be > 0", key="lambda", default=1.0)
    generations: int = rule(_positive, "must be >= 1", default=3)
    order: str = rule(lambda v: v in ("round_robin", "random_label"),
                      "must be round_robin or random_label", default="round_robin")
    chi_max: float = rule(_positive, "must be > 0", default=5.0)
    rapidity_cells: int = rule(lambda v: v >= 10, "must be >= 10", default=2000)
    runs: int = rule(_positive, "must be >= 1", default=20)
    max_failure_fraction: float = rule(lambda v: 0 <= v <= 1, "must lie in [0, 1]", default=0.05)


BLOCKS = {
    "bohm": BohmBlock,
    "grw": GrwBlock,
    "bell_pure": BellPureBlock,
    "bell_hybrid": BellHybridBlock,
    "sf_flash": SfFlashBlock,
}


@dataclass
class OutputBlock:
    dir: Optional[str] = None
    densities: bool = True


@dataclass
class ExperimentConfig:
    model: str
    params: object
    seed: int = 0
    snapshots: list = field(default_factory=list)
    output: OutputBlock = field(default_factory=OutputBlock)
    threads: int = 1

    def as_dict(self):
        return {
            "model": self.model,
            "seed": self.seed,
            "snapshots": list(self.snapshots),
            "threads": self.threads,
            "output": block_to_dict(self.output),
            self.model: block_to_dict(self.params),
        }

    def resolved(self):
        """Everything that affects results (no output location or worker count)."""
        d = self.as_dict()
        d.pop("output")
        d.pop("threads")
        return d

    def hash(self):
        """sha256 over the canonical (sorted-key) JSON of the resolved config."""
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, seed=None, out=None, threads=None):
        return dataclasses.replace(
            self,
            seed=self.seed if seed is None else seed,
            threads=self.threads if threads is None else threads,
            output=dataclasses.replace(self.output, dir=out) if out else self.output,
        )


# --- building --------------------------------------------------------------

_SCALARS = {int: (int,), float: (int, float), str: (str,), bool: (bool,)}


def _field_type(f):
    t = f.type
    optional = getattr(t, "__origin__", None) is not None and type(None) in getattr(t, "__args__", ())
    if optional:
        t = [a for a in t.__args__ if a is not type(None)][0]
    return t, optional


def _build(cls, data, path, errors):
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a mapping, got {type(data).__name__}")
        return None
    fields = {_yaml_key(f): f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            errors.append(f"{path}.{key}: unknown field")
    kwargs = {}
    for key, f in fields.items():
        name = f.name
        if key not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                errors.append(f"{path}.{key}: required field missing")
            continue
        v = data[key]
        t, optional = _field_type(f)
        where = f"{path}.{key}"
        if v is None and optional:
            kwargs[name] = None
            continue
        if dataclasses.is_dataclass(t):
            built = _build(t, v, where, errors)
            if built is not None:
                kwargs[name] = built
            continue
        if t in _SCALARS:
            ok = isinstance(v, _SCALARS[t]) and not (t in (int, float) and isinstance(v, bool))
            if not ok:
                errors.append(f"{where}: expected {t.__name__}, got {v!r}")
                continue
            v = t(v)
        elif t in (list, dict) and not isinstance(v, t):
            errors.append(f"{where}: expected a {t.__name__}, got {v!r}")
            continue
        check = f.metadata.get("check")
        if check is not None and not check(v):
            errors.append(f"{where} = {v!r}: {f.metadata['message']}")
            continue
        kwargs[name] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def _check_terms(terms, n_axes, where, errors, spinor=False):
    if not isinstance(terms, list) or not terms:
        errors.append(f"{where}: expected a nonempty list of Gaussian terms")
        return
    for i, term in enumerate(terms):
        built = _build(GaussianTerm, term, f"{where}[{i}]", errors)
        if built is None:
            continue
        if len(built.center) != n_axes:
            errors.append(f"{where}[{i}].center: expected {n_axes} coordinates")
        if built.momentum is not None and len(built.momentum) != n_axes:
            errors.append(f"{where}[{i}].momentum: expected {n_axes} components")
        if spinor and built.spinor is not None and len(built.spinor) != 2:
            errors.append(f"{where}[{i}].spinor: expected 2 components")


def _cross_checks(model, p, errors):
    """Constraints that involve more than one field."""
    if model in ("bohm", "grw"):
        if not p.masses or any(not isinstance(m, (int, float)) or m <= 0 for m in p.masses):
            errors.append(f"{model}.masses: every mass must be a number > 0")
        _check_terms(p.initial, len(p.masses) * p.dim, f"{model}.initial", errors)
        n_axes = len(p.masses) * p.dim
        if p.grid.points ** n_axes > 2**28:
            errors.append(f"{model}.grid: {p.grid.points}^{n_axes} points exceed the memory budget")
    if model == "grw":
        dx = p.grid.extent / p.grid.points
        if p.sigma < 2 * dx:
            errors.append(f"grw.sigma = {p.sigma}: must be at least two grid spacings ({2 * dx})")
    if model == "bell_pure" and p.max_particles > p.sites:
        errors.append("bell_pure.max_particles: must not exceed sites")
    if model == "bell_hybrid":
        _check_terms([p.initial], 1, "bell_hybrid.initial", errors)
    if model == "sf_flash":
        N = len(p.masses)
        if N not in (1, 2):
            errors.append("sf_flash.masses: one or two particles supported")
        if len(p.packets) != N:
            errors.append(f"sf_flash.packets: expected one packet per particle ({N})")
        _check_terms(p.packets, 1, "sf_flash.packets", errors, spinor=True)
        labels = sorted(s.get("label", 0) for s in p.seeds if isinstance(s, dict))
        if labels != list(range(1, N + 1)):
            errors.append(f"sf_flash.seeds: need exactly one seed per label 1..{N}")
        for i, s in enumerate(p.seeds):
            if not isinstance(s, dict) or set(s) - {"t", "x", "u1", "label"} or not {"t", "x", "label"} <= set(s):
                errors.append(f"sf_flash.seeds[{i}]: expected keys t, x, label (and optional u1)")


def config_from_dict(data):
    errors = []
    if not isinstance(data, dict):
        raise ValidationError(["top level: expected a mapping"])
    model = data.get("model")
    if model not in MODELS:
        raise ValidationError([f"model = {model!r}: must be one of {', '.join(MODELS)}"])
    allowed = {"model", "seed", "snapshots", "output", "threads", model}
    for key in data:
        if key not in allowed:
            errors.append(f"{key}: unknown top-level field")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        errors.append(f"seed = {seed!r}: must be an integer in [0, 2^64)")
    snaps = data.get("snapshots", [])
    if not isinstance(snaps, list) or any(not isinstance(s, (int, float)) or s < 0 for s in snaps):
        errors.append("snapshots: expected a list of times >= 0")
        snaps = []
    threads = data.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        errors.append(f"threads = {threads!r}: must be an integer >= 1")
    params = _build(BLOCKS[model], data.get(model, {}) or {}, model, errors)
    output = _build(OutputBlock, data.get("output", {}) or {}, "output", errors)
    if params is not None:
        _cross_checks(model, params, errors)
        T = getattr(params, "T", None)
        if T is not None and any(s > T for s in snaps):
            errors.append(f"snapshots: times must not exceed {model}.T = {T}")
    if errors:
        raise ValidationError(errors)
    return ExperimentConfig(model, params, seed, sorted(float(s) for s in snaps), output, threads)


def parse_config_text(text):
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ParseError(str(exc.problem or exc), mark.line + 1 if mark else None,
                         mark.column + 1 if mark else None) from None
    except yaml.YAMLError as exc:
        raise ParseError(str(exc)) from None
    return config_from_dict(data if data is not None else {})


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def dump_config(cfg):
    """YAML text that loads back to an identical configuration."""
    return yaml.safe_dump(cfg.as_dict(), sort_keys=True)
