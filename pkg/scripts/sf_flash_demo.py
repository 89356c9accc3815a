"""Relativistic flash chains for two Dirac packets; prints each run's flashes."""
from _common import parser, run

p = parser(__doc__, "sf_pair.yaml")
p.add_argument("--runs", type=int, default=5)
args = p.parse_args()
cfg, manifest, rec = run(args, runs=args.runs)

by_run = {}
for f in rec["flash"]:
    by_run.setdefault(f["run"], []).append(f)
for run_id, fl in sorted(by_run.items()):
    print(f"run {run_id}: " + "  ".join(f"{f['label']}@({f['t']:.2f},{f['x'][0]:+.2f})" for f in fl))
s = manifest.statistics
print(f"causal violations {s['causal_violations']}, max cut mass {s['max_cut_mass']:.2e}, "
      f"share of flashes with cut mass > 1e-3: {s['cut_mass_above_1e-3']:.1%}")
