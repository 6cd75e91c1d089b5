"""Grid trajectory search on top of per-slot beamforming.

Slots are numbered from 1 to N in this module, so ``schedule.psi[n - 1]``
is the sensing indicator of slot ``n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .beamforming import InfeasibleError, alternating_optimize, baseline_beamformers
from .lifted import LiftedBeamformerSet
from .metrics import SlotTiming, link_report
from .scenario import ConfigError, GridMap, ScenarioConfig, build_grid, channel_set
from .scheduler import SensingSchedule

log = logging.getLogger(__name__)

__all__ = [
    "BEAMFORMING_MODES",
    "MemoTable",
    "PathScore",
    "SlotOutcome",
    "TrajectoryResult",
    "WaypointEvaluator",
    "exhaustive_trajectory",
    "fixed_straight_trajectory",
    "greedy_path",
    "path_score",
    "plan_trajectory",
    "reachable_waypoints",
    "waypoint_value",
]

BEAMFORMING_MODES = ("optimized", "equal-power", "random")
NEG_INF = float("-inf")


@dataclass
class SlotOutcome:
    """Beamforming result of one (cell, psi, timing) combination."""

    value: float  # planner valuation, -inf when the slot is infeasible
    throughput: float  # achieved bit/s/Hz (0 when nothing could be served)
    feasible: bool
    lifted: LiftedBeamformerSet | None = field(default=None, repr=False)
    trace: list = field(default_factory=list, repr=False)
    slacks: dict = field(default_factory=dict, repr=False)
    diagnostic: str = ""


class WaypointEvaluator:
    """Runs the slot beamformer at cell centers and caches by geometry.

    The cache is keyed by ``(cell, psi, timing weights)``: channels depend on
    the cell only and the slot value only on the timing split through its
    weights.  ``calls`` counts fresh beamforming runs.
    """

    def __init__(self, cfg: ScenarioConfig, grid: GridMap | None = None,
                 beamforming: str = "optimized", seed: int | None = None,
                 keep_beamformers: bool = True, **optimizer_kwargs):
        if beamforming not in BEAMFORMING_MODES:
            raise ValueError(f"unknown beamforming mode {beamforming!r}")
        self.cfg = cfg
        self.grid = grid or build_grid(cfg)
        self.mode = beamforming
        self.seed = cfg.rng_seed if seed is None else seed
        self.keep = keep_beamformers
        self.optimizer_kwargs = optimizer_kwargs
        self.calls = 0
        self._cache: dict = {}
        # equal-power directions reuse optimized runs of the same geometry
        self._optimized: dict = {}

    def derive(self, period: float | None = None, beamforming: str | None = None,
               share_outcomes: bool = True) -> "WaypointEvaluator":
        """Evaluator for another period or beamforming mode at the same geometry.

        Slot outcomes do not depend on the period, so caches are shared:
        the outcome cache when the mode matches, the optimized runs always.
        """
        cfg = self.cfg if period is None else self.cfg.with_period(period)
        mode = self.mode if beamforming is None else beamforming
        other = WaypointEvaluator(cfg, self.grid, mode, self.seed, self.keep,
                                  **self.optimizer_kwargs)
        other._optimized = self._optimized
        if share_outcomes and mode == self.mode:
            other._cache = self._cache
        return other

    def key(self, cell: int, psi: int, timing: SlotTiming):
        return (int(cell), int(bool(psi)), tuple(round(w, 12) for w in timing.weights))

    def evaluate(self, cell: int, psi: int, timing: SlotTiming) -> SlotOutcome:
        k = self.key(cell, psi, timing)
        hit = self._cache.get(k)
        if hit is None:
            hit = self.compute(cell, psi, timing)
            self._cache[k] = hit
        return hit

    def _optimize(self, cell, psi, timing, ch):
        k = self.key(cell, psi, timing)
        if k not in self._optimized:
            try:
                res = alternating_optimize(ch, psi, self.cfg, timing=timing,
                                           **self.optimizer_kwargs)
            except InfeasibleError as exc:
                res = exc
            self._optimized[k] = res
        return self._optimized[k]

    def compute(self, cell: int, psi: int, timing: SlotTiming) -> SlotOutcome:
        """Fresh evaluation, bypassing the outcome cache."""
        self.calls += 1
        cfg = self.cfg
        ch = channel_set(self.grid.center(cell), cfg)
        trace = []
        if self.mode == "random":
            rng = np.random.default_rng([self.seed, int(cell), int(bool(psi))])
            lifted = baseline_beamformers("random", ch, psi, cfg, rng)
        else:
            res = self._optimize(cell, psi, timing, ch)
            if self.mode == "optimized":
                if isinstance(res, InfeasibleError):
                    return SlotOutcome(NEG_INF, 0.0, False, diagnostic=str(res))
                lifted, trace = res.lifted, list(res.trace)
            else:
                opt = None if isinstance(res, InfeasibleError) else res
                lifted = baseline_beamformers("equal-power", ch, psi, cfg, optimized=opt,
                                              optimize=False)
        rep = link_report(lifted, ch, psi, cfg, timing)
        value = rep.slot_throughput
        if self.mode == "optimized" and not rep.feasible:
            log.warning("cell %d psi %d: optimized beamformers fail the audit", cell, psi)
            return SlotOutcome(NEG_INF, 0.0, False, lifted if self.keep else None, trace,
                               rep.slacks, "audit failed")
        return SlotOutcome(value, value, rep.feasible, lifted if self.keep else None, trace,
                           rep.slacks)


class MemoTable:
    """Waypoint values keyed by ``(cell, slot, psi)`` plus path scores keyed
    by ``(cell, slot)``.  A disabled table stores nothing."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.waypoints: dict = {}
        self.paths: dict = {}
        self.hits = 0

    @staticmethod
    def _put(table, key, value):
        old = table.get(key)
        if old is not None and old != value:
            raise RuntimeError(f"memo entry {key} would change from {old!r} to {value!r}")
        table[key] = value

    def get_waypoint(self, key):
        if self.enabled and key in self.waypoints:
            self.hits += 1
            return self.waypoints[key]
        return None

    def put_waypoint(self, key, value):
        if self.enabled:
            self._put(self.waypoints, key, value)

    def get_path(self, key):
        if self.enabled and key in self.paths:
            self.hits += 1
            return self.paths[key]
        return None

    def put_path(self, key, value):
        if self.enabled:
            self._put(self.paths, key, value)


class _Planner:
    """Shared state of one planning run: schedule, hop distances, memo."""

    def __init__(self, evaluator: WaypointEvaluator, schedule: SensingSchedule,
                 memo: MemoTable | None = None):
        self.ev = evaluator
        self.cfg = evaluator.cfg
        self.grid = evaluator.grid
        self.schedule = schedule
        self.N = schedule.N
        if self.N != self.cfg.N:
            raise ConfigError(f"schedule has {self.N} slots, scenario has {self.cfg.N}")
        self.memo = memo if memo is not None else MemoTable()
        self.start = self.grid.index_of(self.cfg.start)
        self.finish = self.grid.index_of(self.cfg.finish)
        self.hops = self.grid.hop_distances(self.finish)
        if self.hops[self.start] < 0 or self.hops[self.start] > self.N - 1:
            raise ConfigError(
                f"finish is {self.hops[self.start]} moves from start but only {self.N - 1} "
                "moves are available")

    def psi(self, n):
        return self.schedule.psi[n - 1]

    def value(self, cell, n):
        return waypoint_value(cell, n, self.psi(n), self.ev, self.memo,
                              timing=self.schedule.timing[n - 1])

    def reachable(self, cell, n):
        return reachable_waypoints(cell, n, self.grid, self.cfg, hops=self.hops,
                                   finish=self.finish)


def reachable_waypoints(cell: int, n: int, grid: GridMap, cfg: ScenarioConfig,
                        hops: np.ndarray | None = None, finish: int | None = None) -> list[int]:
    """Cells the UAV may occupy in slot ``n + 1`` when in ``cell`` at slot ``n``.

    A candidate must be one move away (hovering included) and still leave
    enough slots to reach the finish cell by slot ``N``.
    """
    N = cfg.N
    if not 1 <= n < N:
        raise ValueError(f"slot {n} has no successor (N = {N})")
    if hops is None:
        finish = grid.index_of(cfg.finish)
        hops = grid.hop_distances(finish)
    left = N - (n + 1)
    return [c for c in grid.adjacency[cell] if 0 <= hops[c] <= left]


def waypoint_value(cell: int, n: int, psi: int, evaluator: WaypointEvaluator,
                   memo: MemoTable | None = None, timing: SlotTiming | None = None) -> float:
    """Slot throughput at a cell center in bit/s/Hz (``-inf`` if infeasible)."""
    key = (int(cell), int(n), int(bool(psi)))
    if memo is not None:
        hit = memo.get_waypoint(key)
        if hit is not None:
            return hit
    if timing is None:
        from .metrics import slot_timing
        timing = slot_timing(evaluator.cfg.slot_len, psi, evaluator.cfg.overlap_fraction)
    val = evaluator.evaluate(cell, psi, timing).value
    if memo is not None:
        memo.put_waypoint(key, val)
    return val


def _pick(cands, values):
    """Index of the best candidate; ties go to the lowest cell index."""
    best = None
    for c, v in sorted(zip(cands, values), key=lambda cv: cv[0]):
        if best is None or v > best[1]:
            best = (c, v)
    return best


def _average(values):
    return float(np.mean(values)) if values else NEG_INF


class PathScore(NamedTuple):
    """Average value first; among paths that all contain an infeasible slot
    (average ``-inf``) fewer infeasible slots win, then more throughput."""

    average: float
    feasible_slots: int
    feasible_sum: float


def path_score(values) -> PathScore:
    fin = [v for v in values if math.isfinite(v)]
    return PathScore(_average(values), len(fin), float(sum(fin)))


def greedy_path(cell: int, n: int, planner: _Planner) -> tuple[list[int], float]:
    """Greedy continuation from ``cell`` at slot ``n`` to the finish at slot N.

    Returns the cells of slots ``n..N`` and their :class:`PathScore`.
    """
    key = (int(cell), int(n))
    hit = planner.memo.get_path(key)
    if hit is not None:
        return list(hit[0]), hit[1]
    path = [cell]
    values = [planner.value(cell, n)]
    cur = cell
    for m in range(n, planner.N):
        cands = planner.reachable(cur, m)
        vals = [planner.value(c, m + 1) for c in cands]
        cur, v = _pick(cands, vals)
        path.append(cur)
        values.append(v)
    score = path_score(values)
    planner.memo.put_path(key, (tuple(path), score))
    return path, score


@dataclass
class TrajectoryResult:
    scheme: str
    cells: list
    waypoints: np.ndarray
    psi: tuple
    slot_values: list
    slot_throughput: list
    feasible: list
    average_throughput: float
    beamformers: list = field(default_factory=list, repr=False)
    slacks: list = field(default_factory=list, repr=False)

    @property
    def N(self) -> int:
        return len(self.cells)

    def max_step(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.max(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))


def _result(scheme: str, cells, planner: _Planner) -> TrajectoryResult:
    ev, sched = planner.ev, planner.schedule
    outs = [ev.evaluate(c, sched.psi[i], sched.timing[i]) for i, c in enumerate(cells)]
    thr = [o.throughput for o in outs]
    return TrajectoryResult(
        scheme=scheme,
        cells=list(cells),
        waypoints=np.array([planner.grid.center(c) for c in cells]),
        psi=tuple(sched.psi),
        slot_values=[o.value for o in outs],
        slot_throughput=thr,
        feasible=[o.feasible for o in outs],
        average_throughput=float(np.mean(thr)),
        beamformers=[o.lifted for o in outs],
        slacks=[o.slacks for o in outs],
    )


def plan_trajectory(evaluator: WaypointEvaluator, schedule: SensingSchedule,
                    memo: MemoTable | None = None, outer: bool = True) -> TrajectoryResult:
    """Commit one waypoint per slot.

    With ``outer`` every reachable candidate is scored by the average value
    of its greedy continuation; without it the candidate with the best own
    value is taken (a single greedy pass).
    """
    pl = _Planner(evaluator, schedule, memo)
    cells = [pl.start]
    pl.value(pl.start, 1)
    for n in range(1, pl.N):
        cands = pl.reachable(cells[-1], n)
        if outer:
            scores = [greedy_path(c, n + 1, pl)[1] for c in cands]
        else:
            scores = [pl.value(c, n + 1) for c in cands]
        cells.append(_pick(cands, scores)[0])
    return _result("opt-outer" if outer else "opt-greedy", cells, pl)


def _shortest_path(grid: GridMap, a: int, b: int) -> list[int]:
    """Hop-shortest path; each step goes to the lowest-index cell that is one hop closer."""
    dist = grid.hop_distances(b)
    if dist[a] < 0:
        raise ConfigError(f"cell {b} is unreachable from cell {a}")
    path = [a]
    while path[-1] != b:
        cur = path[-1]
        path.append(min(c for c in grid.adjacency[cur] if dist[c] == dist[cur] - 1))
    return path


def fixed_straight_trajectory(evaluator: WaypointEvaluator, schedule: SensingSchedule,
                              memo: MemoTable | None = None) -> TrajectoryResult:
    """Fly straight to the best hover cell, hover, then fly straight to the finish.

    Every cell that fits the time budget is scored as if the UAV hovered
    there for all slots of the schedule (see :class:`PathScore`).
    """
    pl = _Planner(evaluator, schedule, memo)
    from_start = pl.grid.hop_distances(pl.start)
    best = None
    for c in range(pl.grid.size):
        if from_start[c] < 0 or pl.hops[c] < 0 or from_start[c] + pl.hops[c] > pl.N - 1:
            continue
        total = path_score([pl.value(c, n) for n in range(1, pl.N + 1)])
        if best is None or total > best[1]:
            best = (c, total)
    hover = best[0]
    out = _shortest_path(pl.grid, pl.start, hover)
    back = _shortest_path(pl.grid, hover, pl.finish)
    cells = out + [hover] * (pl.N - len(out) - len(back) + 1) + back[1:]
    return _result("fixed-straight", cells, pl)


def exhaustive_trajectory(evaluator: WaypointEvaluator, schedule: SensingSchedule,
                          memo: MemoTable | None = None, max_paths: int = 2_000_000
                          ) -> TrajectoryResult:
    """Path with the best average achieved throughput over every admissible
    path (tiny instances only).  Infeasible slots count as zero here, so the
    result bounds the achieved throughput of any planner."""
    pl = _Planner(evaluator, schedule, memo)
    best = [None, NEG_INF]
    count = [0]

    def gain(c, n):
        return evaluator.evaluate(c, pl.psi(n), schedule.timing[n - 1]).throughput

    def walk(path, total):
        n = len(path)
        if n == pl.N:
            count[0] += 1
            if count[0] > max_paths:
                raise RuntimeError(f"more than {max_paths} paths; instance too large")
            if best[0] is None or total > best[1]:
                best[0], best[1] = list(path), total
            return
        for c in pl.reachable(path[-1], n):
            path.append(c)
            walk(path, total + gain(c, n + 1))
            path.pop()

    walk([pl.start], gain(pl.start, 1))
    return _result("exhaustive", best[0], pl)


def check_trajectory(result: TrajectoryResult, cfg: ScenarioConfig) -> list[str]:
    """Endpoint and speed violations of a trajectory (empty when valid)."""
    problems = []
    wp = result.waypoints
    if len(wp) != cfg.N:
        problems.append(f"{len(wp)} waypoints for {cfg.N} slots")
    if not np.allclose(wp[0], cfg.start, atol=1e-9):
        problems.append(f"starts at {tuple(wp[0])} instead of {cfg.start}")
    if not np.allclose(wp[-1], cfg.finish, atol=1e-9):
        problems.append(f"ends at {tuple(wp[-1])} instead of {cfg.finish}")
    limit = cfg.max_speed * cfg.slot_len * (1 + 1e-9)
    for n in range(1, len(wp)):
        step = math.dist(wp[n - 1], wp[n])
        if step > limit:
            problems.append(f"slot {n}->{n + 1} moves {step:.6g} m > {limit:.6g} m")
    return problems
