"""Bell-type lattice jump process: occupancy at T against the Born weights."""
from collections import Counter

from _common import parser, run

p = parser(__doc__, "bell_lattice.yaml")
p.add_argument("--runs", type=int, default=2000)
args = p.parse_args()
cfg, manifest, rec = run(args, runs=args.runs)

occ = manifest.statistics["occupancy_at_T"]
print(f"chi-square {occ['statistic']:.1f} vs critical {occ['critical']:.1f} "
      f"({'pass' if occ['passed'] else 'FAIL'}), mean jumps per run {manifest.statistics['mean_jumps']:.2f}")
T = max(r["t"] for r in rec["trajectory"])
n = Counter(len(r["q"]) for r in rec["trajectory"] if r["t"] == T)
print("particle number at T:", {k: n[k] for k in sorted(n)})
