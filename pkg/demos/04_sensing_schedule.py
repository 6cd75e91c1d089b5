"""Adaptive sensing intervals and the four policies.

Run: python3 demos/04_sensing_schedule.py
"""

from aisac.scheduler import AisacPolicy, SensingParameterTrace, build_schedule, schedule_for_policy

calm = build_schedule(SensingParameterTrace.constant(20), AisacPolicy(), 20)
print("slowly varying target, intervals:", calm.intervals)
print("sensing slots (0-based):", calm.sensing_slots)

# one value per sensing event; the target starts moving at the fourth event
values = [10.0] * 4 + [10.0 * 1.5 ** i for i in range(1, 13)]
busy = build_schedule(SensingParameterTrace(values), AisacPolicy(threshold=0.1), 20)
print("target moves from event 4 on, intervals:", busy.intervals)
print("psi:", "".join(map(str, busy.psi)))

for p in ("1", "2", "3", "4"):
    s = schedule_for_policy(p, 20)
    print(f"policy {p}: {sum(s.psi):2d} sensing slots  {''.join(map(str, s.psi))}")
