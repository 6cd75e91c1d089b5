"""Initialization, feasibility restoration and the outer alternating loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..conic import ConicProgram, solve
from ..lifted import LiftedBeamformerSet
from ..metrics import SlotTiming
from ..scenario import ChannelSet, ScenarioConfig, steering_vector
from .problem import SlotProblem, SlotState
from .subproblems import (FEAS_TOL, InfeasibleError, _clean, _low_rank, _sens_matrices, _ul_matrices,
                          dl_transmit_loop, gev_receive, power_slack, qos_rows,
                          sensing_transmit_loop, solve_sensing_receive, solve_ul_receive)

log = logging.getLogger(__name__)

RANK_TOL = 1e-4
RESTORE_ROUNDS = 10


@dataclass
class BeamformingResult:
    lifted: LiftedBeamformerSet
    objective: float
    trace: list
    feasible: bool
    iterations: int
    converged: bool
    rank_ratios: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    inner_traces: list = field(default_factory=list, repr=False)


def _projector(v):
    v = np.asarray(v, complex)
    n = np.vdot(v, v).real
    return np.outer(v, v.conj()) / n if n > 0 else np.zeros((len(v), len(v)), complex)


def initial_state(prob: SlotProblem, ch: ChannelSet) -> SlotState:
    """MRT transmit and matched-filter receive matrices; power split between
    communication and sensing when sensing is on."""
    K, J, Q = prob.K, prob.J, ch.Q
    share = 0.5 if J else 1.0
    W = np.array([share / K * _projector(h) for h in ch.h])
    V = np.array([_projector(h) for h in ch.h])
    if J:
        B = [steering_vector(th, Q) for th in ch.theta_sens[:J]]
        R = np.array([0.5 / J * _projector(b) for b in B])
        U = np.array([_projector(b) for b in B])
    else:
        R = U = np.zeros((0, Q, Q), complex)
    return SlotState(prob.reduce(W), prob.reduce(V), prob.reduce(R), prob.reduce(U))


def _gev_receivers(prob: SlotProblem, st: SlotState) -> SlotState:
    V = st.V.copy()
    for k in range(prob.K):
        A, B0, B1 = _ul_matrices(prob, st, k)
        V[k], _ = gev_receive(A, B1 if prob.overlap else B0)
    U = st.U.copy()
    for j in range(prob.J):
        A, B = _sens_matrices(prob, st, j)
        U[j], _ = gev_receive(A, B)
    return st.replace(V=V, U=U)


def _max_min_slack(prob: SlotProblem, st: SlotState, cap: float = 1.25):
    """Transmit matrices maximizing the smallest normalized QoS slack.

    Each QoS row ``signal - gamma * interference >= 0`` is divided by its
    current ``gamma * interference`` and required to exceed ``z - 1``.
    """
    prog = ConicProgram()
    Wv = [prog.variable(prob.Q, f"W{k}") for k in range(prob.K)]
    Rv = [prog.variable(prob.Q, f"R{j}") for j in range(prob.J)]
    z = prog.variable(1, "z")
    prog.add_linear(z.trace())
    prog.add_ge(cap - z.trace(), "cap")
    current = {v.index: st.W[k] for k, v in enumerate(Wv)}
    current.update({v.index: st.R[j] for j, v in enumerate(Rv)})
    for name, sig, inter, g in qos_rows(prob, st, Wv, Rv):
        norm = max(g * inter.value(current), 1e-12)
        prog.add_ge((sig - g * inter) * (1.0 / norm) + 1.0 - z.trace(), name)
    prog.add_ge(power_slack(prob, st, Wv, Rv), "power")
    sol = solve(prog, tol=1e-8)
    if not sol.optimal:
        return None
    funcs = prob.transmit_functionals(st)
    W = _low_rank(_clean(sol.values[: prob.K]), funcs)
    R = _low_rank(_clean(sol.values[prob.K: prob.K + prob.J]), funcs) if prob.J else st.R
    return st.replace(W=W, R=R)


def restore_feasibility(prob: SlotProblem, st: SlotState) -> SlotState:
    """Alternate closed-form receivers with the max-min-slack transmit program."""
    st = _gev_receivers(prob, st)
    for _ in range(RESTORE_ROUNDS):
        if prob.feasible(st, FEAS_TOL):
            return st
        new = _max_min_slack(prob, st)
        if new is None:
            break
        st = _gev_receivers(prob, new)
    if prob.feasible(st, FEAS_TOL):
        return st
    worst = float(np.min(prob.slacks(st)))
    raise InfeasibleError(f"QoS constraints unattainable (worst relative slack {worst:.3g})",
                          stage="restoration")


def _rank_report(lifted: LiftedBeamformerSet, warnings: list):
    ratios = lifted.rank_ratios or {}
    for name, rs in ratios.items():
        for i, r in enumerate(rs):
            if r > RANK_TOL:
                msg = f"{name}[{i}] rank-one ratio {r:.3g} exceeds {RANK_TOL:g}"
                warnings.append(msg)
                log.warning(msg)
    return ratios


def alternating_optimize(ch: ChannelSet, psi: int, cfg: ScenarioConfig,
                         init: LiftedBeamformerSet | None = None,
                         timing: SlotTiming | None = None, max_iter: int = 20,
                         rel_tol: float = 1e-4, inner_max: int = 30,
                         inner_tol: float = 1e-5) -> BeamformingResult:
    """Alternate the ``W``, ``V`` (and with sensing ``R``, ``U``) blocks.

    Raises :class:`InfeasibleError` when no QoS-feasible point is found.
    """
    prob = SlotProblem(ch, psi, cfg, timing)
    st = prob.to_state(init) if init is not None else initial_state(prob, ch)
    if not prob.feasible(st, FEAS_TOL):
        st = restore_feasibility(prob, st)
    val = prob.objective(st)
    trace = [val]
    inner = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        st, t_w = dl_transmit_loop(prob, st, inner_max, inner_tol)
        st = solve_ul_receive(prob, st, inner_max, inner_tol)
        t_r = []
        if prob.J:
            st, t_r = sensing_transmit_loop(prob, st, inner_max, inner_tol)
            st, _ = solve_sensing_receive(prob, st)
        inner.append({"W": t_w, "R": t_r})
        new_val = prob.objective(st)
        trace.append(new_val)
        change = abs(new_val - val) / max(abs(val), 1e-12)
        val = new_val
        if change < rel_tol:
            converged = True
            break
    lifted = prob.to_lifted(st).normalized().extracted()
    warnings = []
    ratios = _rank_report(lifted, warnings)
    return BeamformingResult(lifted, val, trace, True, it, converged, ratios, warnings, inner)
