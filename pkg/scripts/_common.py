import argparse
import dataclasses
import tempfile
from pathlib import Path

from qtwo.harness import load_config, read_records, run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def parser(description, config):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path, default=CONFIGS / config)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="keep the run here (default: a temporary directory)")
    p.add_argument("--threads", type=int, default=1)
    return p


def run(args, **params):
    """Run the configured experiment; return (config, manifest, records-by-kind).

    Keyword arguments replace fields of the model block (e.g. ``runs=200``).
    """
    cfg = load_config(args.config).with_overrides(seed=args.seed, threads=args.threads)
    if params:
        cfg = dataclasses.replace(cfg, params=dataclasses.replace(cfg.params, **params))
    out = args.out or Path(tempfile.mkdtemp(prefix="qtwo-"))
    manifest = run_experiment(cfg, out)
    records = {e["kind"]: read_records(out / e["file"], e["kind"]) for e in manifest.outputs}
    return cfg, manifest, records
