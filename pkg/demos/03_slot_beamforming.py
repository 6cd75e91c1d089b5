"""Alternating beamforming for one sensing slot at desk scale.

Shows the monotone objective trace, the inner loops and how close the
lifted matrices are to rank one.

Run: python3 demos/03_slot_beamforming.py
"""

import numpy as np

from aisac.beamforming import alternating_optimize, baseline_beamformers
from aisac.experiment import desk_scale
from aisac.metrics import link_report, slot_timing
from aisac.scenario import build_grid, channel_set

cfg = desk_scale(seed=1)
ch = channel_set(build_grid(cfg).center(27), cfg)
res = alternating_optimize(ch, 1, cfg)
print("outer trace (bit/s/Hz):", np.round(res.trace, 6))
for n, inner in enumerate(res.inner_traces, 1):
    print(f"  iteration {n}: {len(inner['W'])} downlink steps, {len(inner['R'])} sensing steps")
print("converged:", res.converged, "after", res.iterations, "iterations")
for name, ratios in res.rank_ratios.items():
    print(f"  {name}: second/first eigenvalue", ", ".join(f"{r:.1e}" for r in ratios))

timing = slot_timing(cfg.slot_len, 1, cfg.overlap_fraction)
rep = link_report(res.lifted, ch, 1, cfg, timing)
print("DL SINR (dB):", np.round(10 * np.log10(rep.dl_sinr), 2))
print("sensing SINR (dB):", np.round(10 * np.log10(rep.sens_sinr), 2))
print("feasible:", rep.feasible, " power used:", f"{rep.power_used:.3f} W of {cfg.uav_max_power:.3f} W")

rng = np.random.default_rng(0)
for mode in ("equal-power", "random"):
    L = baseline_beamformers(mode, ch, 1, cfg, rng, optimized=res)
    print(f"{mode:>12}: {link_report(L, ch, 1, cfg, timing).slot_throughput:.4f} bit/s/Hz "
          f"(optimized {res.objective:.4f})")
