"""Command line: ``qtwo simulate | export | verify | arith``.

Exit codes: 0 success, 2 invalid input, 3 run failure above the configured
threshold, 4 a verification check failed.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import __version__
from .config import MODELS, ParseError, ValidationError, load_config
from .records import IoError, RecordError, export_csv, read_records
from .runner import RunFailure, output_dir, run_experiment
from .units import PHYSICAL, flash_rate, format_exact, mean_waiting_time, to_simulation_units

EXIT_OK, EXIT_INVALID, EXIT_RUN, EXIT_VERIFY = 0, 2, 3, 4


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _level(text):
    v = float(text)
    if not 0 < v < 100:
        raise argparse.ArgumentTypeError("level is a percentage in (0, 100)")
    return v / 100


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="qtwo", description="Primitive-ontology quantum simulators.")
    p.add_argument("--version", action="version", version=f"qtwo {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one model from a YAML configuration")
    s.add_argument("model", choices=MODELS)
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--seed", type=_seed, help="overrides the configured seed")
    s.add_argument("--out", type=Path, help="output directory (default: $QTWO_OUT or ./runs)")
    s.add_argument("--threads", type=_positive_int, help="worker processes for per-run models")
    s.add_argument("--quiet", action="store_true")

    e = sub.add_parser("export", help="convert JSONL records of a run to CSV")
    e.add_argument("run_dir", type=Path)
    e.add_argument("--out", type=Path, help="directory for the CSV files (default: run_dir)")

    v = sub.add_parser("verify", help="run the invariant checks")
    v.add_argument("--level", type=_level, default=None,
                   help="significance level in percent for the statistical checks")
    v.add_argument("--all", action="store_true", help="run the full acceptance scenarios (slow)")
    v.add_argument("--only", type=int, nargs="+", metavar="N", help="acceptance criteria to run")

    a = sub.add_parser("arith", help="exact rate arithmetic and unit conversion")
    a.add_argument("--particles", default="1e23")
    a.add_argument("--lambda", dest="lam", default="1e-15", help="collapse rate per particle, 1/s")
    a.add_argument("--convert", nargs=2, metavar=("VALUE", "SCALE"),
                   help="express VALUE in units of SCALE (same dimension)")
    return p


def _simulate(args):
    cfg = load_config(args.config)
    if cfg.model != args.model:
        raise ValidationError([f"model: config is for {cfg.model!r}, command asked for {args.model!r}"])
    cfg = cfg.with_overrides(seed=args.seed, out=str(args.out) if args.out else None,
                             threads=args.threads)
    out = args.out or output_dir(cfg)
    manifest = run_experiment(cfg, out)
    f = manifest.failures
    if not args.quiet:
        print(f"{cfg.model}: seed {cfg.seed}, {f['runs']} runs, {f['count']} failed -> {out}")
        for name, stat in manifest.statistics.items():
            if isinstance(stat, dict) and "passed" in stat:
                print(f"  {name}: {'pass' if stat['passed'] else 'FAIL'} "
                      f"(statistic {stat['statistic']:.4g}, critical {stat['critical']:.4g})")
    if manifest.failed:
        print(f"failure fraction {f['fraction']:.3%} exceeds {f['threshold']:.3%}", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


def _export(args):
    run_dir = args.run_dir
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise IoError(f"{run_dir} has no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    out = args.out or run_dir
    out.mkdir(parents=True, exist_ok=True)
    for entry in manifest["outputs"]:
        recs = read_records(run_dir / entry["file"], entry["kind"])
        target = out / (Path(entry["file"]).stem + ".csv")
        export_csv(recs, entry["kind"], target)
        print(f"{entry['file']} -> {target} ({len(recs)} records)")
    return EXIT_OK


def _verify(args):
    from .checks import quick_suite, run_acceptance

    if args.all or args.only:
        results = run_acceptance(args.only, args.level)
    else:
        results = quick_suite(args.level if args.level is not None else 0.01)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def _arith(args):
    rate = flash_rate(args.particles, args.lam)
    print(f"particles N           = {format_exact(args.particles)}")
    print(f"lambda per particle   = {format_exact(args.lam)} /s")
    print(f"flash rate N*lambda   = {format_exact(rate)} /s")
    print(f"mean time per flash   = {format_exact(mean_waiting_time(args.particles, args.lam))} s")
    if args.convert:
        value, scale = args.convert
        print(f"{value} in units of {scale} = {format_exact(to_simulation_units(value, scale))}")
    print("reference scales:")
    for k, v in PHYSICAL.items():
        print(f"  {k:<22} {format_exact(v)}")
    return EXIT_OK


COMMANDS = {"simulate": _simulate, "export": _export, "verify": _verify, "arith": _arith}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except RunFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    except ParseError as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, RecordError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
