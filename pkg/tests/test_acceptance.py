"""Acceptance suite: one check per criterion, each recorded as a PASS/FAIL line.

The desk-scale criteria share module fixtures, so slot optimizations run once
and are reused by the convergence, rank, memo, ordering and audit checks.
"""

import itertools
import logging
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from aisac.beamforming import (InfeasibleError, SlotProblem, SlotState, alternating_optimize,
                               dual_transform_value, gev_receive, initial_state,
                               quadratic_transform_value, restore_feasibility,
                               solve_sensing_receive, solve_ul_receive, update_delta,
                               update_epsilon, update_theta, upper_bound)
from aisac.beamforming.auxiliary import ratio_terms
from aisac.beamforming.subproblems import _sens_matrices, _ul_matrices
from aisac.conic import ConicProgram, solve
from aisac.experiment import desk_scale
from aisac.scenario import ScenarioConfig, build_grid, channel_set
from aisac.scheduler import AisacPolicy, SensingParameterTrace, build_schedule, schedule_for_policy
from aisac.trajectory import (MemoTable, WaypointEvaluator, check_trajectory,
                              exhaustive_trajectory, fixed_straight_trajectory, plan_trajectory)

log = logging.getLogger("acceptance")

DESK_SEEDS = range(20)
PLAN_SEEDS = range(5)
# central cells tried in order until one admits a QoS-feasible slot
CENTRAL_CELLS = (27, 28, 35, 36, 19, 20, 26, 29, 34, 37, 43, 44)


def monotone(trace, slack=1e-8):
    return all(b >= a - slack for a, b in zip(trace, trace[1:]))


# --------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def desk_runs():
    """One sensing slot per seed at the first feasible central cell."""
    runs = []
    for seed in DESK_SEEDS:
        cfg = desk_scale(seed=seed)
        grid = build_grid(cfg)
        for cell in CENTRAL_CELLS:
            ch = channel_set(grid.center(cell), cfg)
            t0 = time.perf_counter()
            try:
                res = alternating_optimize(ch, 1, cfg)
            except InfeasibleError:
                continue
            runs.append(dict(seed=seed, cell=cell, res=res, cfg=cfg, ch=ch,
                             seconds=time.perf_counter() - t0))
            break
        else:
            runs.append(dict(seed=seed, cell=None, res=None))
    return runs


@pytest.fixture(scope="module")
def desk_plans():
    """Trajectories for the ordering, memo and audit criteria."""
    out = []
    for seed in PLAN_SEEDS:
        cfg = desk_scale(seed=seed)
        ev = WaypointEvaluator(cfg)
        policies = {p: plan_trajectory(ev, schedule_for_policy(p, cfg.N)) for p in "1234"}
        adaptive = schedule_for_policy("2", cfg.N)
        modes = {m: plan_trajectory(ev.derive(beamforming=m), adaptive)
                 for m in ("equal-power", "random")}
        # the full-length period, where the adaptive schedule is clearly sparser
        long_ev = ev.derive(period=20.0)
        long_policies = {p: plan_trajectory(long_ev, schedule_for_policy(p, long_ev.cfg.N))
                         for p in "1234"}
        fixed = fixed_straight_trajectory(ev, adaptive)
        out.append(dict(seed=seed, cfg=cfg, long_cfg=long_ev.cfg, ev=ev, policies=policies,
                        long_policies=long_policies, modes=modes, fixed=fixed))
    return out


def tiny_cfg(seed, N):
    rng = np.random.default_rng(seed)
    ues = tuple(map(tuple, rng.uniform(0, 300, size=(2, 2))))
    return ScenarioConfig(grid_cols=3, grid_rows=3, area_width=300.0, area_height=300.0,
                          ue_positions=ues, sensing_positions=((250.0, 50.0),),
                          antenna_count=3, start=(50.0, 150.0), finish=(250.0, 150.0),
                          max_speed=100 * math.sqrt(2), period=float(N), slot_count=N,
                          slot_len=1.0, rng_seed=seed)


@pytest.fixture(scope="module")
def tiny_plans():
    out = []
    t0 = time.perf_counter()
    for seed in range(4):
        base = WaypointEvaluator(tiny_cfg(seed, 5))
        for N in (3, 4, 5):
            ev = base.derive(period=float(N))
            sched = schedule_for_policy("fixed:2", N)
            out.append(dict(seed=seed, N=N, cfg=ev.cfg,
                            plans=[plan_trajectory(ev, sched, outer=o) for o in (True, False)],
                            best=exhaustive_trajectory(ev, sched),
                            fixed=fixed_straight_trajectory(ev, sched)))
    return out, time.perf_counter() - t0


# --------------------------------------------------------------- criteria


def test_c01_monotone_convergence(desk_runs, acceptance):
    bad = []
    for r in desk_runs:
        res = r["res"]
        if res is None:
            bad.append(f"seed {r['seed']}: no feasible central cell")
            continue
        if not (monotone(res.trace) and res.converged and res.iterations <= 20
                and r["seconds"] < 60):
            bad.append(f"seed {r['seed']} cell {r['cell']}: iterations {res.iterations}, "
                       f"converged {res.converged}, {r['seconds']:.1f} s")
    worst = max((r["seconds"] for r in desk_runs if r["res"] is not None), default=float("nan"))
    acceptance(1, not bad, f"{len(desk_runs)} slots, slowest {worst:.1f} s; {bad or 'all monotone'}")
    assert not bad


def random_state(prob, rng):
    def psd(n, scale):
        A = rng.standard_normal((n, prob.Q, prob.Q)) + 1j * rng.standard_normal((n, prob.Q, prob.Q))
        X = A @ A.conj().transpose(0, 2, 1)
        return X / np.trace(X, axis1=1, axis2=2).real[:, None, None] * scale[:, None, None]

    W = psd(prob.K, rng.dirichlet(np.ones(prob.K)) * rng.uniform(0.1, 0.6))
    V = psd(prob.K, np.ones(prob.K))
    R = psd(prob.J, rng.dirichlet(np.ones(prob.J)) * rng.uniform(0.1, 0.4)) if prob.J else \
        np.zeros((0, prob.Q, prob.Q), complex)
    U = psd(prob.J, np.ones(prob.J)) if prob.J else np.zeros((0, prob.Q, prob.Q), complex)
    return SlotState(W, V, R, U)


def test_c02_auxiliary_stationarity(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    for n in range(100):
        cfg = desk_scale(seed=n % 7)
        grid = build_grid(cfg)
        ch = channel_set(grid.center(int(rng.integers(grid.size))), cfg)
        prob = SlotProblem(ch, n % 2, cfg)
        st = random_state(prob, rng)
        aux = update_epsilon(prob, st, update_delta(prob, st))
        parts = [(prob.a_dl, *prob.dl_parts(st), aux.delta_dl)]
        if prob.overlap:
            parts.append((prob.a1, *prob.ul_parts(st, 1), aux.delta_ul))
        for t, S, I, delta in parts:
            for k in range(prob.K):
                d, h = delta[k], 1e-6 * (1 + delta[k])
                f = lambda x: dual_transform_value(t, x, S[k], I[k])
                # derivative measured against the size of its terms
                worst = max(worst, abs(f(d + h) - f(d - h)) / (2 * h) / t)
        C_dl, D_dl, C_ul, D_ul = ratio_terms(prob, st, aux)
        pairs = [(C_dl, D_dl, aux.eps_dl)] + ([(C_ul, D_ul, aux.eps_ul)] if prob.overlap else [])
        for C, D, eps in pairs:
            for k in range(prob.K):
                e, h = eps[k], 1e-6 * max(eps[k], 1e-12)
                g = lambda x: quadratic_transform_value(x, C[k], D[k])
                worst = max(worst, abs(g(e + h) - g(e - h)) / (2 * h) / (2 * math.sqrt(C[k])))
    acceptance(2, worst <= 1e-5, f"100 random states, worst scaled derivative {worst:.2e}")
    assert worst <= 1e-5


def test_c03_rank_one_recovery(desk_runs, acceptance, caplog):
    ratios, exceptions = [], []
    for r in desk_runs:
        res = r["res"]
        if res is None:
            continue
        for name, rs in res.rank_ratios.items():
            for i, v in enumerate(rs):
                ratios.append(v)
                if v > 1e-4:
                    exceptions.append(f"seed {r['seed']} {name}[{i}] {v:.2e}")
        # every exception is also in the run's own warning list
        assert sum(v > 1e-4 for rs in res.rank_ratios.values() for v in rs) == len(res.warnings)
    for e in exceptions:
        log.warning("rank-one exception: %s", e)
    share = np.mean(np.array(ratios) <= 1e-4)
    ok = share >= 0.95
    acceptance(3, ok, f"{len(ratios)} matrices, {share:.1%} with ratio <= 1e-4, "
                      f"max {max(ratios):.1e}; exceptions {exceptions or 'none'}")
    assert ok


def small_problem(seed, K, J, psi):
    rng = np.random.default_rng(seed)
    ues = tuple(map(tuple, rng.uniform(100, 900, size=(K, 2))))
    cfg = ScenarioConfig(grid_cols=8, grid_rows=8, antenna_count=4, ue_positions=ues,
                         sensing_positions=((375.0, 175.0), (375.0, 725.0))[:J],
                         max_speed=125 * math.sqrt(2), start=(62.5, 562.5),
                         finish=(937.5, 562.5), period=10.0, slot_count=10)
    ch = channel_set(tuple(rng.uniform(300, 700, 2)), cfg)
    prob = SlotProblem(ch, psi, cfg)
    return prob, ch


def test_c04_receive_oracles(acceptance):
    worst, used = 0.0, 0
    seed = 0
    while used < 50:
        seed += 1
        sensing = used % 2 == 1
        prob, ch = small_problem(seed, 2 + seed % 2, 2 if sensing else 0, int(sensing))
        try:
            st = restore_feasibility(prob, initial_state(prob, ch))
        except InfeasibleError:
            continue
        if sensing:
            new, _ = solve_sensing_receive(prob, st)
            got = prob.sinrs(new)[3]
            for j in range(prob.J):
                _, oracle = gev_receive(*_sens_matrices(prob, new, j))
                worst = max(worst, abs(got[j] / oracle - 1))
        else:
            new = solve_ul_receive(prob, st)
            got = prob.sinrs(new)[2]
            for k in range(prob.K):
                A, B0, _ = _ul_matrices(prob, new, k)
                worst = max(worst, abs(got[k] / gev_receive(A, B0)[1] - 1))
        used += 1
    acceptance(4, worst <= 1e-4, f"50 instances, worst relative gap {worst:.2e}")
    assert worst <= 1e-4


def _lambda_max_value(H, P):
    prog = ConicProgram()
    W = prog.variable(H.shape[0])
    prog.add_linear(W.trace(H))
    prog.add_ge(P - W.trace())
    return solve(prog).objective


def test_c05_solver_oracles(acceptance):
    rng = np.random.default_rng(5)
    gaps = []
    for n in range(10):
        A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        H = (A + A.conj().T) / 2
        P = rng.uniform(0.5, 3)
        gaps.append(abs(_lambda_max_value(H, P) - P * max(np.linalg.eigvalsh(H)[-1], 0)))
    for c in rng.uniform(0.5, 4, 5):
        # max c sqrt(x) - x at x = c^2 / 4
        prog = ConicProgram()
        x = prog.variable(1)
        prog.add_sqrt(x.trace(), c)
        prog.add_linear(x.trace(), -1.0)
        gaps.append(abs(solve(prog).objective - c * c / 4))
        # max c log(1 + x) - x at x = c - 1
        prog = ConicProgram()
        x = prog.variable(1)
        prog.add_log(x.trace() + 1.0, c)
        prog.add_linear(x.trace(), -1.0)
        xs = max(c - 1, 0.0)
        gaps.append(abs(solve(prog).objective - (c * math.log1p(xs) - xs)))
    analytic = max(gaps)

    grid_gaps = []
    for _ in range(3):
        def herm():
            A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            return (A + A.conj().T) / 2
        C = herm()
        B = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        S = B @ B.conj().T
        prog = ConicProgram()
        W = prog.variable(2)
        prog.add_linear(W.trace(C))
        prog.add_sqrt(W.trace(S), 1.5)
        prog.add_ge(1.0 - W.trace())
        sol = solve(prog)

        def f(p):
            L = np.array([[p[0], 0], [p[2] + 1j * p[3], p[1]]])
            X = L @ L.conj().T
            tr = np.trace(X).real
            X = X / tr if tr > 1 else X
            return -(np.trace(C @ X).real + 1.5 * math.sqrt(max(np.trace(S @ X).real, 0.0)))

        grid = np.linspace(-1, 1, 9)
        start = min(itertools.product(grid, repeat=4), key=f)
        ref = minimize(f, start, method="Nelder-Mead",
                       options=dict(xatol=1e-10, fatol=1e-12, maxiter=20000))
        grid_gaps.append(abs(sol.objective + ref.fun))
    ok = analytic <= 1e-6 and max(grid_gaps) <= 1e-4
    acceptance(5, ok, f"analytic gap {analytic:.1e}, grid-search gap {max(grid_gaps):.1e}")
    assert ok


def test_c06_theta_bound(acceptance):
    rng = np.random.default_rng(6)
    phi, chi = rng.uniform(1e-3, 1e3, 10_000), rng.uniform(1e-3, 1e3, 10_000)
    tight = np.max(np.abs(upper_bound(phi, chi, update_theta(phi, chi)) / (chi * phi) - 1))
    theta = update_theta(phi, chi) * np.exp(rng.uniform(0.01, 2, 10_000)
                                            * rng.choice([-1, 1], 10_000))
    strict = bool(np.all(upper_bound(phi, chi, theta) > chi * phi))
    ok = tight <= 1e-12 and strict
    acceptance(6, ok, f"tight to {tight:.1e}, 10^4 mismatched values strictly above: {strict}")
    assert ok


def test_c07_trajectory_oracle(tiny_plans, acceptance):
    plans, seconds = tiny_plans
    over, below_fixed = [], []
    for r in plans:
        for p in r["plans"]:
            if p.average_throughput > r["best"].average_throughput + 1e-12:
                over.append((r["seed"], r["N"], p.scheme))
            if p.average_throughput < r["fixed"].average_throughput - 1e-9:
                below_fixed.append((r["seed"], r["N"], p.scheme))
    ok = not over and seconds < 600
    acceptance(7, ok, f"{len(plans)} instances in {seconds:.0f} s; above exhaustive {over or 'none'}; "
                      f"below fixed-straight {below_fixed or 'none'}")
    assert not over and seconds < 600


def test_c08_memo_transparency(desk_plans, acceptance):
    diffs = []
    for r in desk_plans:
        sched = schedule_for_policy("2", r["cfg"].N)
        on = plan_trajectory(r["ev"], sched, MemoTable(True))
        # fresh outcome cache so that every lookup reaches the evaluator
        fresh = r["ev"].derive(share_outcomes=False)
        off = plan_trajectory(fresh, sched, MemoTable(False))
        if on.cells != off.cells or on.slot_values != off.slot_values:
            diffs.append(r["seed"])
        assert fresh.calls > 0
    acceptance(8, not diffs, f"{len(desk_plans)} desk runs; differing seeds {diffs or 'none'}")
    assert not diffs


def test_c09_schedule(acceptance):
    s = build_schedule(SensingParameterTrace.constant(40), AisacPolicy(delta_max=8), 40)
    got = s.intervals[:6]
    ok = got == (1, 2, 4, 8, 8, 8)
    acceptance(9, ok, f"intervals {got}")
    assert ok


def test_c10_orderings(desk_plans, acceptance):
    failures = []
    tol = 1e-9
    short_b = []

    def ordered(vals):
        return all(a >= b - tol for a, b in zip(vals, vals[1:]))

    for r in desk_plans:
        pol = [r["policies"][p].average_throughput for p in "1234"]
        long_pol = [r["long_policies"][p].average_throughput for p in "1234"]
        eq = r["modes"]["equal-power"].average_throughput
        rnd = r["modes"]["random"].average_throughput
        checks = {
            "a": pol[0] >= pol[3] - tol,
            "b": ordered(long_pol),
            "c": ordered([pol[1], eq, rnd]),
            "d": long_pol[1] >= pol[1] - tol,
        }
        failures += [f"seed {r['seed']} ({k})" for k, ok in checks.items() if not ok]
        if not ordered(pol):
            short_b.append(r["seed"])
        log.info("seed %d policies T=10 %s T=20 %s equal-power %.4f random %.4f", r["seed"],
                 np.round(pol, 4), np.round(long_pol, 4), eq, rnd)
    acceptance(10, not failures, f"{len(desk_plans)} seeds; failures {failures or 'none'}; "
                                 f"policy order also at T=10 s except seeds {short_b or 'none'}")
    assert not failures


def test_c11_constraint_audit(desk_plans, tiny_plans, acceptance):
    trajectories = []
    for r in desk_plans:
        trajectories += [(r["cfg"], t) for t in r["policies"].values()]
        trajectories += [(r["cfg"], t) for t in r["modes"].values()]
        trajectories += [(r["long_cfg"], t) for t in r["long_policies"].values()]
        trajectories.append((r["cfg"], r["fixed"]))
    for r in tiny_plans[0]:
        trajectories += [(r["cfg"], t) for t in r["plans"] + [r["best"], r["fixed"]]]
    problems, worst = [], math.inf
    for cfg, t in trajectories:
        problems += check_trajectory(t, cfg)
        for feasible, slacks in zip(t.feasible, t.slacks):
            if feasible:
                worst = min([worst] + [v for v in slacks.values() if v is not None])
    ok = not problems and worst >= -1e-6
    acceptance(11, ok, f"{len(trajectories)} trajectories; path problems {problems or 'none'}; "
                       f"lowest feasible-slot slack {worst:.2e}")
    assert ok
