"""A small period sweep through the experiment runner, written to CSV.

Only communication slots are used so the sweep finishes in a few minutes
on one core.

Run: python3 demos/06_desk_sweep.py [out_dir]
"""

import sys

from aisac.experiment import ExperimentSpec, desk_scale, run, write_outputs

out = sys.argv[1] if len(sys.argv) > 1 else "desk_sweep"
spec = ExperimentSpec(desk_scale(seed=0), policy="none",
                      trajectory=("opt-outer", "fixed-straight"),
                      sweep=("period", ["10", "12"]), out=out)
results = run(spec)
write_outputs(spec, results, out)
for point in results:
    for t in point.trajectories:
        print(f"T = {point.value:>2} s  {t.scheme:>15}: {t.average_throughput:.4f} bit/s/Hz")
print("CSV files in", out)
