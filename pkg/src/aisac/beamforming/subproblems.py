"""Block updates of the alternating beamforming optimization.

Every block solves a convex program built with :mod:`aisac.conic` and is
accepted only if the true slot throughput does not drop and the QoS
constraints still hold, which makes every loop monotone.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.linalg as sla

from ..conic import AffineExpr, ConicProgram, affine_sum, solve
from ..lifted import reduce_rank
from .auxiliary import AuxiliaryState, update_delta, update_epsilon, update_theta
from .problem import LN2, SlotProblem, SlotState

log = logging.getLogger(__name__)

SOLVER_TOL = 1e-9
ACCEPT_SLACK = 1e-10
FEAS_TOL = 1e-6
ZERO_POWER = 1e-7


class InfeasibleError(RuntimeError):
    """QoS constraints cannot be met at this waypoint."""

    def __init__(self, message, stage=""):
        super().__init__(message)
        self.stage = stage


def _herm(X):
    return (X + X.conj().T) / 2


def _clean(mats):
    """Drop interior-point residue: matrices with negligible trace become zero."""
    out = np.array(mats, copy=True)
    for i, X in enumerate(out):
        out[i] = _herm(X)
        if np.trace(X).real < ZERO_POWER:
            out[i] = 0
    return out


def _low_rank(mats, functionals):
    """Rank-reduced copies with every relevant trace unchanged."""
    return np.array([reduce_rank(X, functionals) if X.any() else X for X in mats])


def _accept(prob: SlotProblem, old: SlotState, new: SlotState, old_val: float):
    """Return ``(state, value, accepted)`` after the monotonicity/feasibility guard."""
    if not all(np.all(np.isfinite(x)) for x in (new.W, new.V, new.R, new.U)):
        return old, old_val, False
    with np.errstate(invalid="ignore"):
        new_val = prob.objective(new)
    ok = np.isfinite(new_val) and new_val >= old_val - ACCEPT_SLACK * max(1.0, abs(old_val))
    if ok and prob.feasible(new, FEAS_TOL):
        return new, new_val, True
    return old, old_val, False


# --------------------------------------------------------------------------
# Shared affine pieces
# --------------------------------------------------------------------------


def _dl_interference(prob, k, Wv, st, Rv=None):
    """Downlink interference-plus-noise of UE k as an affine expression.

    ``Wv``/``Rv`` are conic variables or ``None`` (then the state value is a constant).
    """
    A = prob.Hd[k]
    const = 1.0
    terms = []
    for i in range(prob.K):
        if i == k:
            continue
        if Wv is None:
            const += float(np.real(np.vdot(A, st.W[i])))
        else:
            terms.append(Wv[i].trace(A))
    for j in range(prob.J):
        if Rv is None:
            const += float(np.real(np.vdot(A, st.R[j])))
        else:
            terms.append(Rv[j].trace(A))
    return affine_sum(terms) + const


def _ul_interference(prob, k, st, Wv=None, Rv=None):
    """Echo-overlapped uplink interference-plus-noise of UE k (V fixed)."""
    V = st.V[k]
    const = float(np.trace(V).real)
    for i in range(prob.K):
        if i != k:
            const += float(np.real(np.vdot(prob.Hu[i], V)))
    M = prob.echo_coef(V)
    terms = []
    for i in range(prob.K):
        if Wv is None:
            const += float(np.real(np.vdot(M, st.W[i])))
        else:
            terms.append(Wv[i].trace(M))
    for j in range(prob.J):
        if Rv is None:
            const += float(np.real(np.vdot(M, st.R[j])))
        else:
            terms.append(Rv[j].trace(M))
    return affine_sum(terms) + const


def _sens_phi(prob, j, i, st, Wv=None, Rv=None):
    C = prob.sens_coef(st.U[j], i)
    terms = []
    const = 0.0
    if Rv is None:
        const += float(np.real(np.vdot(C, st.R[i])))
    else:
        terms.append(Rv[i].trace(C))
    for k in range(prob.K):
        if Wv is None:
            const += float(np.real(np.vdot(C, st.W[k])))
        else:
            terms.append(Wv[k].trace(C))
    return affine_sum(terms) + const


def _const_or(var_list, idx, coef, mats):
    if var_list is None:
        return AffineExpr(const=float(np.real(np.vdot(coef, mats[idx]))))
    return var_list[idx].trace(coef)


def qos_rows(prob, st, Wv=None, Rv=None):
    """QoS rows that depend on transmit matrices as
    ``(name, signal, interference, threshold)`` affine triples."""
    rows = []
    for k in range(prob.K):
        own = _const_or(Wv, k, prob.Hd[k], st.W)
        rows.append((f"dl_qos[{k}]", own, _dl_interference(prob, k, Wv, st, Rv), prob.th_dl))
        if prob.overlap:
            sig = AffineExpr(const=float(np.real(np.vdot(prob.Hu[k], st.V[k]))))
            rows.append((f"ul_qos[{k}]", sig, _ul_interference(prob, k, st, Wv, Rv), prob.th_ul))
    for j in range(prob.J):
        phis = [_sens_phi(prob, j, i, st, Wv, Rv) for i in range(prob.J)]
        clutter = affine_sum(p for i, p in enumerate(phis) if i != j) + 1.0
        rows.append((f"sens_qos[{j}]", prob.gp * phis[j], clutter, prob.th_sens))
    return rows


def power_slack(prob, st, Wv=None, Rv=None):
    used = [_const_or(Wv, k, np.eye(prob.Q), st.W) for k in range(prob.K)]
    used += [_const_or(Rv, j, np.eye(prob.Q), st.R) for j in range(prob.J)]
    return 1.0 - affine_sum(used)


def _add_transmit_constraints(prog, prob, st, Wv=None, Rv=None):
    for name, sig, inter, g in qos_rows(prob, st, Wv, Rv):
        prog.add_ge(sig - g * inter, name)
    prog.add_ge(power_slack(prob, st, Wv, Rv), "power")


# --------------------------------------------------------------------------
# Downlink transmit beamforming
# --------------------------------------------------------------------------


def solve_dl_transmit(prob: SlotProblem, st: SlotState, aux: AuxiliaryState):
    """Quadratic-transform program in ``W`` for fixed auxiliaries.

    Returns the new ``W`` stack or ``None`` when the solver fails.
    """
    prog = ConicProgram()
    Wv = [prog.variable(prob.Q, f"W{k}") for k in range(prob.K)]
    t_dl = prob.a_dl / LN2
    for k in range(prob.K):
        d, e = aux.delta_dl[k], aux.eps_dl[k]
        prog.add_constant(t_dl * (math.log1p(d) - d))
        prog.add_sqrt(Wv[k].trace(t_dl * (1 + d) * prob.Hd[k]), 2 * e)
        D = Wv[k].trace(prob.Hd[k]) + _dl_interference(prob, k, Wv, st)
        prog.add_linear(D, -e * e)
    if prob.overlap:
        t_ul = prob.a1 / LN2
        for k in range(prob.K):
            d, e = aux.delta_ul[k], aux.eps_ul[k]
            sig = float(np.real(np.vdot(prob.Hu[k], st.V[k])))
            prog.add_constant(t_ul * (math.log1p(d) - d) + 2 * e * math.sqrt(t_ul * (1 + d) * sig))
            prog.add_linear(_ul_interference(prob, k, st, Wv=Wv) + sig, -e * e)
    _add_transmit_constraints(prog, prob, st, Wv=Wv)
    sol = solve(prog, tol=SOLVER_TOL, start=list(st.W))
    if not sol.optimal:
        log.debug("downlink transmit program ended with status %s", sol.status)
        return None
    return _low_rank(_clean(sol.values), prob.transmit_functionals(st))


def dl_transmit_loop(prob: SlotProblem, st: SlotState, max_iter: int = 30,
                     rel_tol: float = 1e-5):
    """Alternate auxiliary updates and the ``W`` program until the throughput settles."""
    val = prob.objective(st)
    trace = [val]
    for _ in range(max_iter):
        aux = update_epsilon(prob, st, update_delta(prob, st))
        W = solve_dl_transmit(prob, st, aux)
        if W is None:
            break
        st, new_val, _ = _accept(prob, st, st.replace(W=W), val)
        trace.append(new_val)
        done = new_val - val <= rel_tol * max(abs(val), 1e-12)
        val = new_val
        if done:
            break
    return st, trace


# --------------------------------------------------------------------------
# Receive beamforming (uplink and sensing)
# --------------------------------------------------------------------------


def _whitened_ratio_program(A, B, qos=()):
    """max ``tr(A Y) / tr(B Y)`` over PSD ``Y`` with homogeneous QoS rows.

    Charnes-Cooper form in whitened coordinates ``Y = B^{-1/2} Z B^{-1/2}``
    with ``tr(Z) = 1``; each ``(A_q, B_q, gamma)`` in ``qos`` requires
    ``tr(A_q Y) >= gamma tr(B_q Y)``.  Returns ``(Y / tr Y, best ratio)``
    or ``(None, -inf)``.
    """
    w, E = np.linalg.eigh(_herm(B))
    Bm = E @ np.diag(1 / np.sqrt(w)) @ E.conj().T
    At = _herm(Bm @ A @ Bm)
    scale = max(np.linalg.eigvalsh(At)[-1], 1e-300)
    prog = ConicProgram()
    Z = prog.variable(A.shape[0], "Z")
    prog.add_linear(Z.trace(At / scale))
    prog.add_eq(Z.trace() - 1.0, "normalization")
    for n, (Aq, Bq, g) in enumerate(qos):
        C = _herm(Bm @ (Aq - g * Bq) @ Bm)
        c = max(np.max(np.abs(C)), 1e-300)
        prog.add_ge(Z.trace(C / c), f"qos[{n}]")
    sol = solve(prog, tol=1e-10)
    if not sol.optimal:
        return None, -np.inf
    Y = _herm(Bm @ sol.values[0] @ Bm)
    tr = np.trace(Y).real
    if tr <= 0:
        return None, -np.inf
    return Y / tr, sol.objective * scale


def _ul_matrices(prob: SlotProblem, st: SlotState, k: int):
    A = prob.Hu[k]
    B0 = np.eye(prob.Q, dtype=complex)
    for i in range(prob.K):
        if i != k:
            B0 = B0 + prob.Hu[i]
    B1 = B0
    if prob.psi and prob.J:
        X = st.W.sum(axis=0) + st.R.sum(axis=0)
        E = sum(G @ X @ G.conj().T for G in prob.G) * prob.echo_scale
        B1 = B0 + _herm(E)
    return A, B0, B1


def solve_ul_receive(prob: SlotProblem, st: SlotState, max_iter: int = 30,
                     rel_tol: float = 1e-5):
    """Per-UE receive update for the uplink terms.

    One active uplink ratio (no echo overlap, or the whole uplink overlapped)
    is a generalized Rayleigh quotient solved exactly in Charnes-Cooper
    form.  Two active ratios use quadratic-transform iterations.
    """
    val = prob.objective(st)
    two = prob.overlap and prob.a2 > 0
    funcs = prob.receive_functionals(st)
    for k in range(prob.K):
        A, B0, B1 = _ul_matrices(prob, st, k)
        qos = [(A, B0, prob.th_ul)]
        if prob.overlap:
            qos.append((A, B1, prob.th_ul))
        if not two:
            B = B1 if prob.overlap else B0
            V, _ = _whitened_ratio_program(A, B, qos)
            if V is not None:
                Vs = st.V.copy()
                Vs[k] = reduce_rank(V, funcs)
                st, val, _ = _accept(prob, st, st.replace(V=Vs), val)
            continue
        weights = (prob.a1 / LN2, prob.a2 / LN2)
        for _ in range(max_iter):
            Vs = st.V.copy()
            Vs[k] = _stationary_receive_step(st.V[k], A, (B1, B0), weights)
            st, new_val, ok = _accept(prob, st, st.replace(V=Vs), val)
            if not ok:
                # the eigen step broke a QoS row or did not improve
                V = _fp_receive_step(st.V[k], A, (B1, B0), weights, qos)
                if V is None:
                    break
                Vs[k] = reduce_rank(V, funcs)
                st, new_val, ok = _accept(prob, st, st.replace(V=Vs), val)
            done = (not ok) or new_val - val <= rel_tol * max(abs(val), 1e-12)
            val = new_val
            if done:
                break
    return st


def _stationary_receive_step(V, A, Bs, weights):
    """Unit-trace projector solving the stationarity condition of
    ``sum_i t_i log(1 + tr(A V) / tr(B_i V))`` at the current point.

    The gradient vanishes where ``M+ v = M- v`` with
    ``M+ = sum_i t_i (A + B_i) / (S + I_i)`` and ``M- = sum_i t_i B_i / I_i``;
    the dominant generalized eigenvector of that pencil is the next iterate.
    """
    S = float(np.real(np.vdot(A, V)))
    Is = [float(np.real(np.vdot(B, V))) for B in Bs]
    Mp = sum(t * (A + B) / (S + I) for t, B, I in zip(weights, Bs, Is))
    Mm = sum(t * B / I for t, B, I in zip(weights, Bs, Is))
    _, vecs = sla.eigh(_herm(Mp), _herm(Mm))
    v = vecs[:, -1] / np.linalg.norm(vecs[:, -1])
    return np.outer(v, v.conj())


def _fp_receive_step(V, A, Bs, weights, qos):
    """One dual/quadratic-transform update of a unit-trace receive matrix."""
    # whiten with the larger interference matrix for conditioning
    w, E = np.linalg.eigh(_herm(Bs[0]))
    Bm = E @ np.diag(1 / np.sqrt(w)) @ E.conj().T
    Binv_sqrt = Bm

    def tr(M, X):
        return float(np.real(np.vdot(M, X)))

    prog = ConicProgram()
    Z = prog.variable(A.shape[0], "Z")

    def expr(M):
        return Z.trace(_herm(Binv_sqrt @ M @ Binv_sqrt))

    S = tr(A, V)
    terms = []
    for B, t in zip(Bs, weights):
        I = tr(B, V)
        d = S / I
        C = t * (1 + d) * S
        e = math.sqrt(max(C, 0.0)) / (S + I)
        prog.add_constant(t * (math.log1p(d) - d))
        terms.append((t * (1 + d), e, B))
    # scale so the largest coefficient is O(1)
    ref = max(np.linalg.eigvalsh(_herm(Binv_sqrt @ A @ Binv_sqrt))[-1], 1e-300)
    for c, e, B in terms:
        prog.add_sqrt(expr(c * A / ref), 2 * e * math.sqrt(ref))
        prog.add_linear(expr((A + B) / ref), -e * e * ref)
    prog.add_eq(expr(np.eye(A.shape[0])) - 1.0, "trace")
    for n, (Aq, Bq, g) in enumerate(qos):
        C = _herm(Binv_sqrt @ (Aq - g * Bq) @ Binv_sqrt)
        c = max(np.max(np.abs(C)), 1e-300)
        prog.add_ge(Z.trace(C / c), f"qos[{n}]")
    sol = solve(prog, tol=SOLVER_TOL)
    if not sol.optimal:
        return None
    Vn = _herm(Binv_sqrt @ sol.values[0] @ Binv_sqrt)
    return Vn / np.trace(Vn).real


def _sens_matrices(prob: SlotProblem, st: SlotState, j: int):
    Wsum = st.W.sum(axis=0)
    s = prob.sens_scale
    A = prob.gp * s * prob.G[j] @ (st.R[j] + Wsum) @ prob.G[j].conj().T
    B = np.eye(prob.Q, dtype=complex)
    for i in range(prob.J):
        if i != j:
            B = B + s * prob.G[i] @ (st.R[i] + Wsum) @ prob.G[i].conj().T
    return _herm(A), _herm(B)


def solve_sensing_receive(prob: SlotProblem, st: SlotState):
    """Feasible unit-trace ``U_j`` maximizing each sensing SINR.

    Returns ``(state, per-location best SINR)``; a location is infeasible
    when its best SINR falls below the threshold.
    """
    best = np.zeros(prob.J)
    Us = st.U.copy()
    funcs = prob.receive_functionals(st, sensing=True)
    for j in range(prob.J):
        A, B = _sens_matrices(prob, st, j)
        U, val = _whitened_ratio_program(A, B)
        best[j] = val
        if U is not None:
            Us[j] = reduce_rank(U, funcs)
    new = st.replace(U=Us)
    # U does not enter the throughput; keep the new set only if it stays feasible
    if prob.feasible(new, FEAS_TOL) or not prob.feasible(st, FEAS_TOL):
        st = new
    return st, best


# --------------------------------------------------------------------------
# Sensing transmit beamforming
# --------------------------------------------------------------------------


def solve_sensing_transmit(prob: SlotProblem, st: SlotState):
    """Convex-upper-bound program in ``R`` and the SINR epigraph variables.

    Returns ``(R, chi_dl, chi_ul)`` or ``None`` on solver failure.
    """
    prog = ConicProgram()
    Rv = [prog.variable(prob.Q, f"R{j}") for j in range(prob.J)]
    t_dl = prob.a_dl / LN2
    s_dl, i_dl = prob.dl_parts(st)
    theta_dl = update_theta(i_dl, s_dl / i_dl)
    chi_dl = [prog.variable(1, f"chi_dl{k}") for k in range(prob.K)]
    for k in range(prob.K):
        prog.add_log(chi_dl[k].trace() + 1.0, t_dl)
        phi = _dl_interference(prob, k, None, st, Rv)
        # scale the row by the signal level
        S = s_dl[k]
        prog.add_quadratic_bound(AffineExpr(const=1.0),
                                 [(1 / (2 * theta_dl[k] * S), phi),
                                  (theta_dl[k] / (2 * S), chi_dl[k].trace())],
                                 f"dl_bound[{k}]")
    chi_ul = []
    if prob.overlap:
        t_ul = prob.a1 / LN2
        s_ul, i_ul = prob.ul_parts(st, 1)
        theta_ul = update_theta(i_ul, s_ul / i_ul)
        chi_ul = [prog.variable(1, f"chi_ul{k}") for k in range(prob.K)]
        for k in range(prob.K):
            prog.add_log(chi_ul[k].trace() + 1.0, t_ul)
            phi = _ul_interference(prob, k, st, Rv=Rv)
            S = s_ul[k]
            prog.add_quadratic_bound(AffineExpr(const=1.0),
                                     [(1 / (2 * theta_ul[k] * S), phi),
                                      (theta_ul[k] / (2 * S), chi_ul[k].trace())],
                                     f"ul_bound[{k}]")
    _add_transmit_constraints(prog, prob, st, Rv=Rv)
    sol = solve(prog, tol=SOLVER_TOL)
    if not sol.optimal:
        log.debug("sensing transmit program ended with status %s", sol.status)
        return None
    R = _low_rank(_clean(sol.values[: prob.J]), prob.transmit_functionals(st))
    cd = np.array([sol.values[prob.J + k][0, 0].real for k in range(prob.K)])
    cu = np.array([sol.values[prob.J + prob.K + k][0, 0].real for k in range(len(chi_ul))])
    return R, cd, cu


def sensing_transmit_loop(prob: SlotProblem, st: SlotState, max_iter: int = 30,
                          rel_tol: float = 1e-5):
    """Successive upper-bound refinement for ``R``; monotone in throughput."""
    val = prob.objective(st)
    trace = [val]
    if not prob.J:
        return st, trace
    for _ in range(max_iter):
        out = solve_sensing_transmit(prob, st)
        if out is None:
            break
        st, new_val, _ = _accept(prob, st, st.replace(R=out[0]), val)
        trace.append(new_val)
        done = new_val - val <= rel_tol * max(abs(val), 1e-12)
        val = new_val
        if done:
            break
    return st, trace


# --------------------------------------------------------------------------
# Closed-form receive filters (initialization and oracles)
# --------------------------------------------------------------------------


def gev_receive(A, B):
    """Unit-trace projector onto the dominant generalized eigenvector of ``(A, B)``
    and the attained ratio."""
    w, vecs = sla.eigh(_herm(A), _herm(B))
    v = vecs[:, -1]
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj()), float(w[-1])

