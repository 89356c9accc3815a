"""Run the acceptance scenarios and print one PASS/FAIL line each."""
import argparse
import sys

from qtwo.harness.checks import ACCEPTANCE, run_acceptance

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("numbers", type=int, nargs="*", default=sorted(ACCEPTANCE))
p.add_argument("--level", type=float, help="significance level as a fraction, e.g. 0.01")
args = p.parse_args()

results = run_acceptance(args.numbers, args.level)
for r in results:
    print(r.line(), flush=True)
print(f"{sum(r.passed for r in results)}/{len(results)} passed")
sys.exit(0 if all(r.passed for r in results) else 1)
