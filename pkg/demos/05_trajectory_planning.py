"""Planners against the exhaustive optimum on a 3 x 3 grid.

Run: python3 demos/05_trajectory_planning.py
"""

import math

from aisac.scenario import ScenarioConfig
from aisac.scheduler import schedule_for_policy
from aisac.trajectory import (MemoTable, WaypointEvaluator, exhaustive_trajectory,
                              fixed_straight_trajectory, plan_trajectory)

cfg = ScenarioConfig(grid_cols=3, grid_rows=3, area_width=300.0, area_height=300.0,
                     ue_positions=((150.0, 250.0),), sensing_positions=((250.0, 50.0),),
                     antenna_count=2, start=(50.0, 150.0), finish=(250.0, 150.0),
                     max_speed=100 * math.sqrt(2), period=5.0, slot_count=5, slot_len=1.0)
ev = WaypointEvaluator(cfg)
sched = schedule_for_policy("fixed:2", cfg.N)
memo = MemoTable()
runs = [plan_trajectory(ev, sched, memo, outer=True),
        plan_trajectory(ev, sched, outer=False),
        fixed_straight_trajectory(ev, sched),
        exhaustive_trajectory(ev, sched)]
for r in runs:
    print(f"{r.scheme:>15}: cells {r.cells}  average {r.average_throughput:.4f} bit/s/Hz")
print(f"{ev.calls} beamforming runs, {memo.hits} memo hits")
