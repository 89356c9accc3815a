from .config import ExperimentConfig, ParseError, ValidationError, dump_config, load_config
from .records import read_records, write_records
from .runner import RunFailure, RunManifest, run_experiment
from ..stats import ks_one_sample, ks_two_sample

__all__ = [
    "ExperimentConfig", "ParseError", "ValidationError", "dump_config", "load_config",
    "read_records", "write_records", "RunFailure", "RunManifest", "run_experiment",
    "ks_one_sample", "ks_two_sample",
]
