"""GRW flash counts per run against the Poisson law with mean N*lambda*T."""
from collections import Counter

import numpy as np
from scipy import stats

from _common import parser, run

p = parser(__doc__, "grw_five_particles.yaml")
p.add_argument("--runs", type=int, default=200)
args = p.parse_args()
cfg, manifest, rec = run(args, runs=args.runs)

per_run = Counter(r["run"] for r in rec["flash"])
counts = np.array([per_run.get(i, 0) for i in range(args.runs)])
mu = cfg.params.lam * len(cfg.params.masses) * cfg.params.T
print(f"runs {args.runs}, expected mean {mu:g}, observed mean {counts.mean():.2f}, "
      f"variance {counts.var(ddof=1):.2f}")
lo, hi = int(stats.poisson.ppf(0.01, mu)), int(stats.poisson.ppf(0.99, mu))
edges = np.linspace(lo, hi + 1, 9).astype(int)
obs = np.histogram(counts, bins=edges)[0]
exp = args.runs * np.diff(stats.poisson.cdf(edges - 1, mu))
for a, b, o, e in zip(edges[:-1], edges[1:], obs, exp):
    print(f"  [{a:4d}, {b:4d})  observed {o:4d}  expected {e:7.1f}")
labels = Counter(r["label"] for r in rec["flash"])
print("flashes per particle:", dict(sorted(labels.items())))
