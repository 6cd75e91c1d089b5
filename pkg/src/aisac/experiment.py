"""Experiment orchestration: scenario presets, sweeps and CSV output."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lifted import dump_beamformers
from .scenario import ConfigError, ScenarioConfig
from .scheduler import parse_policy, schedule_for_policy
from .trajectory import (BEAMFORMING_MODES, MemoTable, TrajectoryResult, WaypointEvaluator,
                         exhaustive_trajectory, fixed_straight_trajectory, plan_trajectory)

log = logging.getLogger(__name__)

TRAJECTORY_MODES = ("opt-outer", "opt-greedy", "fixed-straight")
SWEEP_AXES = ("period", "grid", "antennas", "policy")
DESK_PITCH = 125.0


def default_scenario() -> ScenarioConfig:
    """Full-size reference scenario (six random UEs, 12 antennas, 20 x 20 grid)."""
    return ScenarioConfig()


def desk_scale(seed: int = 0, period: float = 10.0, antennas: int = 4) -> ScenarioConfig:
    """Small scenario for quick runs: 8 x 8 grid, three UEs, two sensing spots."""
    return ScenarioConfig(
        grid_cols=8, grid_rows=8, antenna_count=antennas, ue_count=3,
        sensing_positions=((375.0, 175.0), (375.0, 725.0)),
        max_speed=DESK_PITCH * math.sqrt(2.0),
        start=(62.5, 562.5), finish=(937.5, 562.5),
        period=float(period), slot_count=int(round(period)), slot_len=1.0,
        rng_seed=int(seed))


def _snap(cfg: ScenarioConfig, point, cols, rows):
    px, py = cfg.area_width / cols, cfg.area_height / rows
    col = min(max(int(point[0] // px), 0), cols - 1)
    row = min(max(int(point[1] // py), 0), rows - 1)
    return ((col + 0.5) * px, (row + 0.5) * py)


def regrid(cfg: ScenarioConfig, cols: int, rows: int | None = None) -> ScenarioConfig:
    """Same scenario on another grid; endpoints snap to the cell containing
    them and the speed limit grows if a diagonal move would not fit a slot."""
    rows = cols if rows is None else rows
    px, py = cfg.area_width / cols, cfg.area_height / rows
    speed = max(cfg.max_speed, math.hypot(px, py) / cfg.slot_len)
    return cfg.replace(grid_cols=int(cols), grid_rows=int(rows), max_speed=speed,
                       start=_snap(cfg, cfg.start, cols, rows),
                       finish=_snap(cfg, cfg.finish, cols, rows))


def shrink_to_desk(cfg: ScenarioConfig, antennas: int = 4) -> ScenarioConfig:
    return regrid(cfg, 8, 8).replace(antenna_count=antennas)


def apply_axis(cfg: ScenarioConfig, axis: str, value):
    """Scenario and policy text for one sweep point (policy is returned unchanged
    by the other axes)."""
    if axis == "period":
        return cfg.with_period(float(value)), None
    if axis == "grid":
        cols, _, rows = str(value).partition("x")
        return regrid(cfg, int(cols), int(rows) if rows else None), None
    if axis == "antennas":
        return cfg.replace(antenna_count=int(value)), None
    if axis == "policy":
        parse_policy(value)
        return cfg, str(value)
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def parse_sweep(text: str | None):
    """``axis=v1,v2,...`` into ``(axis, [values])``."""
    if not text:
        return None
    axis, sep, vals = text.partition("=")
    axis = axis.strip()
    if not sep or axis not in SWEEP_AXES:
        raise ValueError(f"bad sweep {text!r}; expected <axis>=<v1,v2,...> with axis in {SWEEP_AXES}")
    values = [v.strip() for v in vals.split(",") if v.strip()]
    if not values:
        raise ValueError(f"sweep {text!r} has no values")
    return axis, values


@dataclass
class ExperimentSpec:
    scenario: ScenarioConfig
    policy: str = "none"
    trajectory: tuple = ("opt-outer",)
    beamforming: str = "optimized"
    sweep: tuple | None = None
    out: str | None = None
    seed: int = 0
    dump_beamformers: bool = False
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.trajectory, str):
            self.trajectory = tuple(t.strip() for t in self.trajectory.split(","))
        for t in self.trajectory:
            if t not in TRAJECTORY_MODES + ("exhaustive",):
                raise ValueError(f"unknown trajectory mode {t!r}; expected {TRAJECTORY_MODES}")
        if self.beamforming not in BEAMFORMING_MODES:
            raise ValueError(f"unknown beamforming mode {self.beamforming!r}")
        parse_policy(self.policy)
        if self.sweep is not None:
            axis, values = self.sweep
            for v in values:
                apply_axis(self.scenario, axis, v)


@dataclass
class PointResult:
    index: int
    axis: str | None
    value: str | None
    policy: str
    trajectories: list = field(default_factory=list)
    evaluator: WaypointEvaluator | None = field(default=None, repr=False)


_PLANNERS = {
    "opt-outer": lambda ev, s, m: plan_trajectory(ev, s, m, outer=True),
    "opt-greedy": lambda ev, s, m: plan_trajectory(ev, s, m, outer=False),
    "fixed-straight": fixed_straight_trajectory,
    "exhaustive": exhaustive_trajectory,
}


def point_seed(seed: int, index: int) -> int:
    """Independent RNG seed for sweep point ``index``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def run_point(spec: ExperimentSpec, index: int, axis=None, value=None,
              evaluator: WaypointEvaluator | None = None) -> PointResult:
    cfg, policy = spec.scenario, spec.policy
    if axis is not None:
        cfg, pol = apply_axis(cfg, axis, value)
        policy = pol or policy
    sched = schedule_for_policy(policy, cfg.N, cfg.slot_len, cfg.overlap_fraction)
    ev = evaluator or WaypointEvaluator(cfg, beamforming=spec.beamforming,
                                        seed=point_seed(spec.seed, index))
    res = PointResult(index, axis, value, policy, evaluator=ev)
    for mode in spec.trajectory:
        res.trajectories.append(_PLANNERS[mode](ev, sched, MemoTable()))
    return res


def thread_cap(default: int = 1) -> int:
    raw = os.environ.get("ISAC_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"ISAC_THREADS must be an integer, got {raw!r}") from None


def run(spec: ExperimentSpec) -> list[PointResult]:
    """Run every sweep point (concurrently up to ``spec.threads``) and write
    the CSV files when ``spec.out`` is set."""
    if spec.sweep is None:
        jobs = [(0, None, None)]
    else:
        axis, values = spec.sweep
        jobs = [(i, axis, v) for i, v in enumerate(values)]
    if spec.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            results = list(pool.map(lambda j: run_point(spec, *j), jobs))
    else:
        results = [run_point(spec, *j) for j in jobs]
    if spec.out:
        write_outputs(spec, results, spec.out)
    return results


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return v


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def trajectory_rows(results):
    for pr in results:
        for tr in pr.trajectories:
            for n, (xy, psi, thr, ok) in enumerate(zip(tr.waypoints, tr.psi, tr.slot_throughput,
                                                       tr.feasible), start=1):
                yield [n, float(xy[0]), float(xy[1]), psi, thr, ok, tr.scheme,
                       "" if pr.value is None else pr.value]


def summary_rows(results, spec: ExperimentSpec):
    for pr in results:
        for tr in pr.trajectories:
            yield [pr.axis or "", "" if pr.value is None else pr.value, tr.scheme,
                   spec.beamforming, pr.policy, tr.average_throughput, sum(tr.feasible)]


def convergence_rows(results):
    """Objective traces of two sampled slots (first and middle) per point."""
    for pr in results:
        if not pr.trajectories:
            continue
        tr = pr.trajectories[0]
        ev = pr.evaluator
        slots = sorted({1, (tr.N + 1) // 2})
        sched = schedule_for_policy(pr.policy, tr.N, ev.cfg.slot_len, ev.cfg.overlap_fraction)
        for n in slots:
            out = ev.evaluate(tr.cells[n - 1], sched.psi[n - 1], sched.timing[n - 1])
            for it, val in enumerate(out.trace):
                yield ["" if pr.value is None else pr.value, n, tr.cells[n - 1],
                       sched.psi[n - 1], it, val]


def write_outputs(spec: ExperimentSpec, results, out: str | os.PathLike):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(_csv(
        ["slot", "x", "y", "psi", "slot_throughput", "feasible", "scheme", "sweep_value"],
        trajectory_rows(results)), encoding="utf-8")
    (out / "summary.csv").write_text(_csv(
        ["axis", "value", "scheme", "beamforming", "policy", "average_throughput",
         "feasible_slots"], summary_rows(results, spec)), encoding="utf-8")
    (out / "convergence.csv").write_text(_csv(
        ["sweep_value", "slot", "cell", "psi", "iteration", "objective"],
        convergence_rows(results)), encoding="utf-8")
    if spec.dump_beamformers:
        bdir = out / "beamformers"
        bdir.mkdir(exist_ok=True)
        for pr in results:
            for tr in pr.trajectories:
                for n, lifted in enumerate(tr.beamformers, start=1):
                    if lifted is None:
                        continue
                    tag = f"p{pr.index}_{tr.scheme}_slot{n:03d}"
                    (bdir / f"{tag}.txt").write_text(
                        dump_beamformers(lifted, f"point {pr.index} {tr.scheme} slot {n}"),
                        encoding="utf-8")


def infeasible(results) -> bool:
    """True when some emitted trajectory has no feasible slot at all."""
    return any(not any(tr.feasible) for pr in results for tr in pr.trajectories)


__all__ = [
    "ExperimentSpec",
    "PointResult",
    "SWEEP_AXES",
    "TRAJECTORY_MODES",
    "TrajectoryResult",
    "apply_axis",
    "default_scenario",
    "desk_scale",
    "parse_sweep",
    "point_seed",
    "regrid",
    "run",
    "run_point",
    "shrink_to_desk",
    "thread_cap",
    "write_outputs",
]
