import math

import numpy as np
import pytest

from aisac.scenario import ConfigError, ScenarioConfig
from aisac.scheduler import constant_schedule, schedule_for_policy
from aisac.trajectory import (MemoTable, SlotOutcome, WaypointEvaluator, check_trajectory,
                              exhaustive_trajectory, fixed_straight_trajectory, path_score,
                              plan_trajectory, reachable_waypoints, waypoint_value)


def tiny_cfg(N=4, Q=2, ues=((150.0, 250.0),), sens=((250.0, 50.0),), **kw):
    base = dict(grid_cols=3, grid_rows=3, area_width=300.0, area_height=300.0,
                ue_positions=ues, sensing_positions=sens, antenna_count=Q,
                start=(50.0, 150.0), finish=(250.0, 150.0), max_speed=100 * math.sqrt(2),
                period=float(N), slot_count=N, slot_len=1.0)
    base.update(kw)
    return ScenarioConfig(**base)


class TableEvaluator(WaypointEvaluator):
    """Slot values looked up from a table; ``-inf`` marks an infeasible slot."""

    def __init__(self, cfg, table):
        super().__init__(cfg)
        self.table = table

    def compute(self, cell, psi, timing):
        self.calls += 1
        v = float(self.table(cell, psi))
        ok = math.isfinite(v)
        return SlotOutcome(v, v if ok else 0.0, ok)


def random_table(seed, infeasible=0.0):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(1, 10, size=(9, 2))
    vals[rng.uniform(size=(9, 2)) < infeasible] = -np.inf
    return lambda c, psi: vals[c, psi]


# 3 x 3 cells, row-major: start is cell 3, finish cell 5


def test_reachable_examples():
    cfg = tiny_cfg(N=5)
    ev = TableEvaluator(cfg, lambda c, p: 1.0)
    g = ev.grid
    assert reachable_waypoints(4, 1, g, cfg) == list(range(9))
    assert reachable_waypoints(2, 4, g, cfg) == [5]
    assert 5 in reachable_waypoints(5, 3, g, cfg)
    # every neighbor of the far column is still within two moves of the finish
    assert reachable_waypoints(3, 2, g, cfg) == [0, 1, 3, 4, 6, 7]
    short = tiny_cfg(N=4)
    assert reachable_waypoints(3, 2, g, short) == [1, 4, 7]
    with pytest.raises(ValueError):
        reachable_waypoints(4, 5, g, cfg)


def test_forced_march():
    # no diagonal moves: the middle row is the only way across in time
    cfg = tiny_cfg(N=3, max_speed=100.0)
    ev = TableEvaluator(cfg, random_table(0))
    res = plan_trajectory(ev, constant_schedule(0, 3))
    assert res.cells == [3, 4, 5]


def test_unreachable_finish_rejected():
    cfg = tiny_cfg(N=2)
    ev = TableEvaluator(cfg, lambda c, p: 1.0)
    with pytest.raises(ConfigError):
        plan_trajectory(ev, constant_schedule(0, 2))
    with pytest.raises(ConfigError):
        plan_trajectory(TableEvaluator(tiny_cfg(N=4), lambda c, p: 1.0), constant_schedule(0, 3))


def test_uniform_landscape_tie_break():
    cfg = tiny_cfg(N=5)
    ev = TableEvaluator(cfg, lambda c, p: 1.0)
    res = plan_trajectory(ev, constant_schedule(0, 5))
    # lowest reachable index at every step
    assert res.cells == [3, 0, 0, 1, 5]
    assert res.average_throughput == 1.0


def test_path_score_order():
    inf = -math.inf
    assert path_score([1.0, 1.0]) > path_score([5.0, inf])
    assert path_score([inf, 1.0, 1.0]) > path_score([inf, inf, 9.0])
    assert path_score([inf, 2.0]) > path_score([inf, 1.0])
    assert path_score([2.0, 4.0]).average == 3.0


def test_infeasible_start_still_steers_by_throughput():
    # the start slot is infeasible, so every path averages -inf
    table = lambda c, p: -math.inf if c == 3 else (9.0 if c == 7 else 1.0)
    ev = TableEvaluator(tiny_cfg(N=3), table)
    res = plan_trajectory(ev, constant_schedule(0, 3))
    assert res.cells == [3, 7, 5]
    assert res.average_throughput == pytest.approx(10 / 3)


def test_waypoint_memo_contract():
    cfg = tiny_cfg()
    ev = TableEvaluator(cfg, random_table(1))
    memo = MemoTable()
    a = waypoint_value(4, 2, 1, ev, memo)
    calls = ev.calls
    assert waypoint_value(4, 2, 1, ev, memo) == a
    assert ev.calls == calls and memo.hits == 1
    assert waypoint_value(4, 2, 0, ev, memo) != a
    assert (4, 2, 1) in memo.waypoints and (4, 2, 0) in memo.waypoints


def test_memo_insert_once():
    memo = MemoTable()
    memo.put_waypoint((1, 1, 0), 2.0)
    memo.put_waypoint((1, 1, 0), 2.0)
    with pytest.raises(RuntimeError):
        memo.put_waypoint((1, 1, 0), 3.0)
    off = MemoTable(enabled=False)
    off.put_path((0, 1), ((0,), 1.0))
    assert off.get_path((0, 1)) is None


@pytest.mark.parametrize("seed", range(30))
@pytest.mark.parametrize("N", [3, 4, 5])
def test_planners_against_exhaustive_tables(seed, N):
    cfg = tiny_cfg(N=N)
    table = random_table(seed, infeasible=0.1 if seed % 3 == 0 else 0.0)
    sched = schedule_for_policy("fixed:2", N)
    ev = TableEvaluator(cfg, table)
    best = exhaustive_trajectory(ev, sched)
    for outer in (True, False):
        on = plan_trajectory(ev, sched, MemoTable(True), outer=outer)
        off = plan_trajectory(TableEvaluator(cfg, table), sched, MemoTable(False), outer=outer)
        assert on.cells == off.cells and on.slot_values == off.slot_values
        assert on.average_throughput <= best.average_throughput + 1e-12
        assert check_trajectory(on, cfg) == []
    fixed = fixed_straight_trajectory(ev, sched)
    assert check_trajectory(fixed, cfg) == []
    assert check_trajectory(best, cfg) == []


def test_fixed_straight_shape():
    cfg = tiny_cfg(N=6)
    # cell 7 (top middle) is the only good one
    ev = TableEvaluator(cfg, lambda c, p: 10.0 if c == 7 else 1.0)
    res = fixed_straight_trajectory(ev, constant_schedule(0, 6))
    assert res.cells == [3, 7, 7, 7, 7, 5]
    hover = fixed_straight_trajectory(
        TableEvaluator(tiny_cfg(N=3, start=(150.0, 150.0), finish=(150.0, 150.0)),
                       lambda c, p: 2.0 if c == 4 else 1.0), constant_schedule(0, 3))
    assert hover.cells == [4, 4, 4]


def test_check_trajectory_flags_violations():
    cfg = tiny_cfg(N=4)
    ev = TableEvaluator(cfg, lambda c, p: 1.0)
    res = plan_trajectory(ev, constant_schedule(0, 4))
    res.waypoints = np.array([[50.0, 150.0], [250.0, 150.0], [250.0, 150.0], [250.0, 50.0]])
    problems = check_trajectory(res, cfg)
    assert any("moves" in p for p in problems)
    assert any("ends at" in p for p in problems)


# ------------------------------------------------------ real beamforming values


@pytest.fixture(scope="module")
def real_eval():
    return WaypointEvaluator(tiny_cfg(N=4))


def test_sensing_costs_throughput(real_eval):
    for cell in (4, 7):
        v0 = waypoint_value(cell, 2, 0, real_eval)
        v1 = waypoint_value(cell, 2, 1, real_eval)
        assert v1 <= v0


def test_path_loss_ordering(real_eval):
    # the UE sits above cell 7; cell 1 is the farthest row
    assert waypoint_value(7, 1, 0, real_eval) > waypoint_value(1, 1, 0, real_eval)


def test_real_planning_dominance_and_determinism(real_eval):
    sched = schedule_for_policy("fixed:2", 4)
    plan = plan_trajectory(real_eval, sched)
    best = exhaustive_trajectory(real_eval, sched)
    fixed = fixed_straight_trajectory(real_eval, sched)
    assert plan.average_throughput <= best.average_throughput + 1e-12
    assert fixed.average_throughput <= plan.average_throughput + 1e-9
    assert plan.average_throughput == pytest.approx(np.mean(plan.slot_throughput))
    again = plan_trajectory(WaypointEvaluator(tiny_cfg(N=4)), sched)
    assert again.cells == plan.cells and again.slot_throughput == plan.slot_throughput
    assert check_trajectory(plan, real_eval.cfg) == []


def test_single_ue_hover_cell_nearest():
    cfg = tiny_cfg(N=5, ues=((250.0, 250.0),), sens=())
    res = fixed_straight_trajectory(WaypointEvaluator(cfg), constant_schedule(0, 5))
    assert 8 in res.cells and res.cells.count(8) >= 2


def test_baseline_modes_evaluate(real_eval):
    cfg = real_eval.cfg
    sched = constant_schedule(1, 4)
    t = sched.timing[0]
    opt = real_eval.evaluate(4, 1, t)
    eq = WaypointEvaluator(cfg, beamforming="equal-power").evaluate(4, 1, t)
    r1 = WaypointEvaluator(cfg, beamforming="random", seed=3).evaluate(4, 1, t)
    r2 = WaypointEvaluator(cfg, beamforming="random", seed=3).evaluate(4, 1, t)
    assert eq.throughput <= opt.throughput + 1e-9
    assert r1.throughput == r2.throughput
    with pytest.raises(ValueError):
        WaypointEvaluator(cfg, beamforming="bogus")
