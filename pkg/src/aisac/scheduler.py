"""Adaptive sensing intervals: from a trace of sensed parameters to per-slot
sensing (``psi``) and echo-overlap (``xi``) indicators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import SlotTiming, slot_timing

__all__ = [
    "AisacPolicy",
    "SensingParameterTrace",
    "SensingSchedule",
    "build_schedule",
    "constant_schedule",
    "fixed_interval_schedule",
    "next_interval",
    "parse_policy",
    "schedule_for_policy",
    "variation_ratio",
]


@dataclass(frozen=True)
class AisacPolicy:
    """Interval adaptation rule; intervals double while the variation ratio
    stays at or below ``threshold`` and halve otherwise."""

    threshold: float = 0.1
    delta_min: int = 1
    delta_max: int = 8
    delta_init: int = 1

    def __post_init__(self):
        if not (1 <= self.delta_min <= self.delta_init <= self.delta_max):
            raise ValueError(
                "need 1 <= delta_min <= delta_init <= delta_max, got "
                f"{self.delta_min}, {self.delta_init}, {self.delta_max}")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")


@dataclass(frozen=True)
class SensingParameterTrace:
    """One strictly positive sensed value per sensing event."""

    values: tuple = ()

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(not v > 0 for v in vals):
            raise ValueError("sensing parameter values must be strictly positive")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, n: int, value: float = 1.0) -> "SensingParameterTrace":
        return cls((value,) * n)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SensingSchedule:
    psi: tuple
    xi: tuple
    intervals: tuple
    timing: tuple = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.psi)

    @property
    def sensing_slots(self) -> list[int]:
        """Zero-based indices of the sensing slots."""
        return [n for n, p in enumerate(self.psi) if p]


def variation_ratio(zeta_prev: float, zeta_cur: float) -> float:
    if not zeta_prev > 0:
        raise ValueError(f"previous sensing value must be positive, got {zeta_prev}")
    return abs(zeta_cur - zeta_prev) / zeta_prev


def next_interval(delta: int, f: float, policy: AisacPolicy) -> int:
    if f <= policy.threshold:
        return min(2 * delta, policy.delta_max)
    return max(math.ceil(delta / 2), policy.delta_min)


def _with_timing(psi, intervals, tau, overlap_fraction):
    psi = tuple(int(p) for p in psi)
    timing = tuple(slot_timing(tau, p, overlap_fraction) for p in psi)
    return SensingSchedule(psi, psi, tuple(intervals), timing)


def build_schedule(trace: SensingParameterTrace, policy: AisacPolicy, N: int,
                   tau: float = 1.0, overlap_fraction: float = 0.5) -> SensingSchedule:
    """Sense in slot 1, then wait the adapted interval before each next event.

    Event ``m`` consumes ``trace.values[m]``; when the trace is shorter than
    the number of events the last value repeats (zero variation).
    """
    psi = np.zeros(N, dtype=int)
    vals = trace.values
    if not vals or N < 1:
        return _with_timing(psi, (), tau, overlap_fraction)
    intervals = []
    slot = 0
    delta = policy.delta_init
    m = 0
    while slot < N:
        psi[slot] = 1
        if m > 0:
            prev = vals[min(m - 1, len(vals) - 1)]
            cur = vals[min(m, len(vals) - 1)]
            delta = next_interval(delta, variation_ratio(prev, cur), policy)
        intervals.append(delta)
        slot += delta
        m += 1
    return _with_timing(psi, intervals, tau, overlap_fraction)


def constant_schedule(psi_value: int, N: int, tau: float = 1.0,
                      overlap_fraction: float = 0.5) -> SensingSchedule:
    """``psi`` identically 0 or identically 1."""
    psi = [1 if psi_value else 0] * N
    intervals = [1] * N if psi_value else []
    return _with_timing(psi, intervals, tau, overlap_fraction)


def fixed_interval_schedule(k: int, N: int, tau: float = 1.0,
                            overlap_fraction: float = 0.5) -> SensingSchedule:
    if k < 1:
        raise ValueError("fixed sensing interval must be >= 1 slot")
    psi = [1 if n % k == 0 else 0 for n in range(N)]
    return _with_timing(psi, [k] * sum(psi), tau, overlap_fraction)


def parse_policy(text: str) -> tuple[str, int | None]:
    """``none``, ``adaptive``, ``fixed:<k>``, ``every-slot`` or the numbers 1-4."""
    t = str(text).strip().lower()
    aliases = {"1": "none", "2": "adaptive", "3": "fixed:2", "4": "every-slot"}
    t = aliases.get(t, t)
    if t in ("none", "adaptive", "every-slot"):
        return t, None
    if t.startswith("fixed:"):
        try:
            k = int(t.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad fixed interval in policy {text!r}") from None
        if k < 1:
            raise ValueError("fixed sensing interval must be >= 1 slot")
        return "fixed", k
    raise ValueError(f"unknown policy {text!r}; expected none, adaptive, fixed:<k> or every-slot")


def schedule_for_policy(text: str, N: int, tau: float = 1.0, overlap_fraction: float = 0.5,
                        trace: SensingParameterTrace | None = None,
                        policy: AisacPolicy | None = None) -> SensingSchedule:
    """Schedule of a named policy; ``adaptive`` defaults to a constant trace."""
    kind, k = parse_policy(text)
    if kind == "none":
        return constant_schedule(0, N, tau, overlap_fraction)
    if kind == "every-slot":
        return constant_schedule(1, N, tau, overlap_fraction)
    if kind == "fixed":
        return fixed_interval_schedule(k, N, tau, overlap_fraction)
    policy = policy or AisacPolicy(delta_max=min(8, max(N, 1)))
    trace = trace if trace is not None else SensingParameterTrace.constant(N)
    return build_schedule(trace, policy, N, tau, overlap_fraction)


def timing_of(schedule: SensingSchedule, n: int) -> SlotTiming:
    return schedule.timing[n]
