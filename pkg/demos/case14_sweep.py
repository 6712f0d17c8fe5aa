"""Sweep the demand of the 14-bus system and compare bounds with a local optimum.

Run from the repository root; reports and SVG charts land in
``demo_out/case14``.  Both relaxations stay close to the local cost until
the system runs out of capacity, at which point the cone solver returns an
infeasibility certificate instead of a bound.
"""

import sys

from opfrelax.sweep import SweepConfig, run_sweep, summary_table, write_reports

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out/case14"
cfg = SweepConfig(case="case14", lambdas=(0.5, 0.75, 1.0, 1.25, 1.5, 2.0), methods=("socp", "sdp", "nl"), workers=2)
records = run_sweep(cfg)
print(summary_table(records))

for r in records:
    if r.gap_pct is not None:
        print(f"lambda {r.lam:4.2f}  {r.method:>4}  gap {r.gap_pct:9.5f} %")

paths = write_reports(records, out)
print(f"{len(paths)} files written under {out}")
