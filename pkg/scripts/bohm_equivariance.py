"""Bohmian ensemble of two colliding packets: positions vs |psi|^2 at each snapshot."""
from collections import defaultdict

import numpy as np

from _common import parser, run
from qtwo.stats import cell_cdf, ks_one_sample

p = parser(__doc__, "bohm_two_packets.yaml")
p.add_argument("--runs", type=int, default=2000)
args = p.parse_args()
cfg, manifest, rec = run(args, runs=args.runs)

positions = defaultdict(list)
for r in rec["trajectory"]:
    positions[r["t"]].append(r["q"][0])
print(f"{'t':>6} {'runs':>6} {'KS D':>8} {'critical':>9}  mean x   result")
for d in rec["density"]:
    g = d["grid"]
    axis = g["first"] + g["extent"] / g["points"] * np.arange(g["points"])
    x = np.asarray(positions[d["t"]])
    ks = ks_one_sample(x, cell_cdf(axis, d["values"]), level=0.01)
    print(f"{d['t']:6.2f} {x.size:6d} {ks.statistic:8.4f} {ks.critical:9.4f}  {x.mean():+.3f}   "
          f"{'pass' if ks.passed else 'FAIL'}")
print(f"failed trajectories: {manifest.failures['count']} of {manifest.failures['runs']}")
