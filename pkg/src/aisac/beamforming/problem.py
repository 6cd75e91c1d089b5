"""Per-slot problem data in normalized units.

Transmit matrices are stored as fractions of the UAV power budget and every
link is scaled by its own noise variance, so noise terms become ``1`` (or
``tr(V)`` for receive matrices, which keeps the receive ratios homogeneous).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..lifted import LiftedBeamformerSet
from ..metrics import SlotTiming, slot_timing
from ..scenario import ChannelSet, ScenarioConfig

LN2 = math.log(2.0)


def _orth(M, rtol=1e-10):
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    keep = sv > rtol * max(sv[0], 1e-300) if len(sv) else []
    return U[:, keep]


def _left_vector(G):
    U, _, _ = np.linalg.svd(G)
    return U[:, 0]


def _herm(X):
    return (X + X.conj().T) / 2


def _tr(A, B):
    return float(np.real(np.vdot(A.conj().T, B)))


@dataclass
class SlotState:
    """Normalized beamformers: ``W``/``R`` as power fractions, unit-trace ``V``/``U``."""

    W: np.ndarray
    V: np.ndarray
    R: np.ndarray
    U: np.ndarray

    def copy(self) -> "SlotState":
        return SlotState(self.W.copy(), self.V.copy(), self.R.copy(), self.U.copy())

    def replace(self, **kw) -> "SlotState":
        out = self.copy()
        for k, v in kw.items():
            setattr(out, k, v)
        return out


class SlotProblem:
    """Scaled channel data plus evaluation of SINRs and throughput."""

    def __init__(self, ch: ChannelSet, psi: int, cfg: ScenarioConfig,
                 timing: SlotTiming | None = None):
        self.cfg = cfg
        self.psi = 1 if psi else 0
        self.timing = timing or slot_timing(cfg.slot_len, self.psi, cfg.overlap_fraction)
        self.K = ch.K
        self.J = ch.J if self.psi else 0
        self.full_dim = ch.Q
        # every SINR only sees the span of the UE and sensing steering vectors
        vecs = [ch.h[k] for k in range(ch.K)]
        vecs += [_left_vector(ch.G[j]) for j in range(self.J)]
        self.basis = _orth(np.array(vecs).T)
        B = self.basis
        self.Q = B.shape[1]
        h = ch.h @ B.conj()
        P = cfg.uav_max_power
        H = np.einsum("ka,kb->kab", h, h.conj())
        p = np.asarray(cfg.ue_tx_power, float)
        self.H = H
        self.Hd = H * (P / cfg.noise_dl)
        self.Hu = H * (p / cfg.noise_ul)[:, None, None]
        if self.psi:
            self.G = np.array([B.conj().T @ G @ B for G in ch.G[: self.J]]).reshape(self.J, self.Q, self.Q)
        else:
            self.G = np.zeros((0, self.Q, self.Q), complex)
        self.steer = [B.conj().T @ _left_vector(ch.G[j]) for j in range(self.J)]
        self.echo_scale = P / cfg.noise_ul
        self.sens_scale = P / cfg.noise_sens
        self.gp = cfg.processing_gain
        self.th_dl = cfg.sinr_th_dl
        self.th_ul = cfg.sinr_th_ul
        self.th_sens = cfg.sinr_th_sens
        a_dl, a1, a2 = self.timing.weights
        self.a_dl, self.a1, self.a2 = a_dl, a1, a2
        self.overlap = bool(self.psi and a1 > 0)

    # ------------------------------------------------------------------ units

    def reduce(self, X: np.ndarray) -> np.ndarray:
        B = self.basis
        return np.array([_herm(B.conj().T @ x @ B) for x in X]).reshape(len(X), self.Q, self.Q)

    def expand(self, X: np.ndarray) -> np.ndarray:
        B = self.basis
        n = B.shape[0]
        return np.array([B @ x @ B.conj().T for x in X]).reshape(len(X), n, n)

    def to_state(self, lifted: LiftedBeamformerSet) -> SlotState:
        """Normalized reduced-coordinate copy; parts outside the channel span are dropped."""
        P = self.cfg.uav_max_power
        empty = np.zeros((0, self.Q, self.Q), complex)
        R = self.reduce(lifted.R[: self.J]) / P if self.psi else empty
        U = self.reduce(lifted.U[: self.J]) if self.psi else empty
        return SlotState(self.reduce(lifted.W) / P, self.reduce(lifted.V), R, U)

    def to_lifted(self, st: SlotState) -> LiftedBeamformerSet:
        P = self.cfg.uav_max_power
        W, V = self.expand(st.W) * P, self.expand(st.V)
        if self.psi:
            return LiftedBeamformerSet.create(W, V, self.expand(st.R) * P, self.expand(st.U))
        return LiftedBeamformerSet.create(W, V)

    # ------------------------------------------------------------ components

    def echo_coef(self, V: np.ndarray) -> np.ndarray:
        """Matrix ``M`` with echo power seen by ``V`` equal to ``tr(M X)``."""
        M = np.zeros((self.Q, self.Q), complex)
        for G in self.G:
            M += G.conj().T @ V @ G
        return _herm(self.echo_scale * M)

    def sens_coef(self, U: np.ndarray, i: int) -> np.ndarray:
        """``Phi_{j,i} = tr(C (R_i + sum W))`` for receive matrix ``U = U_j``."""
        G = self.G[i]
        return _herm(self.sens_scale * (G.conj().T @ U @ G))

    def transmit_functionals(self, st: SlotState) -> list:
        """Every ``M`` such that the throughput and QoS rows see a transmit
        matrix only through ``tr(M X)`` (with receive matrices held fixed)."""
        mats = [np.eye(self.Q, dtype=complex)] + list(self.Hd)
        if self.overlap:
            mats += [self.echo_coef(V) for V in st.V]
        for j in range(self.J):
            mats += [self.sens_coef(st.U[j], i) for i in range(self.J)]
        return mats

    def receive_functionals(self, st: SlotState, sensing: bool = False) -> list:
        """Same for the unit-trace ``V`` (or ``U`` when ``sensing``) matrices."""
        eye = np.eye(self.Q, dtype=complex)
        if sensing:
            Wsum = st.W.sum(axis=0)
            return [eye] + [_herm(G @ (st.R[i] + Wsum) @ G.conj().T)
                            for i, G in enumerate(self.G)]
        mats = [eye] + list(self.Hu)
        if self.psi and self.J:
            X = st.W.sum(axis=0) + st.R.sum(axis=0)
            mats.append(_herm(sum(G @ X @ G.conj().T for G in self.G)))
        return mats

    def dl_parts(self, st: SlotState):
        K = self.K
        sig = np.empty(K)
        inter = np.empty(K)
        Rsum = st.R.sum(axis=0) if self.psi else None
        for k in range(K):
            A = self.Hd[k]
            allw = [_tr(A, st.W[i]) for i in range(K)]
            sig[k] = allw[k]
            inter[k] = sum(allw) - allw[k] + 1.0
            if self.psi:
                inter[k] += _tr(A, Rsum)
        return sig, inter

    def ul_parts(self, st: SlotState, xi: int):
        K = self.K
        sig = np.empty(K)
        inter = np.empty(K)
        X = st.W.sum(axis=0) + (st.R.sum(axis=0) if self.psi else 0)
        for k in range(K):
            V = st.V[k]
            vals = [_tr(self.Hu[i], V) for i in range(K)]
            sig[k] = vals[k]
            inter[k] = sum(vals) - vals[k] + np.trace(V).real
            if xi and self.psi:
                inter[k] += _tr(self.echo_coef(V), X)
        return sig, inter

    def sens_phi(self, st: SlotState) -> np.ndarray:
        J = self.J
        Wsum = st.W.sum(axis=0)
        phi = np.zeros((J, J))
        for j in range(J):
            for i in range(J):
                phi[j, i] = _tr(self.sens_coef(st.U[j], i), st.R[i] + Wsum)
        return phi

    def sinrs(self, st: SlotState):
        s, i = self.dl_parts(st)
        dl = s / i
        s1, i1 = self.ul_parts(st, 1)
        s0, i0 = self.ul_parts(st, 0)
        if self.J:
            phi = self.sens_phi(st)
            d = np.diag(phi)
            sens = self.gp * d / (phi.sum(axis=1) - d + 1.0)
        else:
            sens = np.zeros(0)
        return dl, s1 / i1, s0 / i0, sens

    def objective(self, st: SlotState) -> float:
        """Slot throughput in bit/s/Hz."""
        dl, ul1, ul0, _ = self.sinrs(st)
        total = self.a_dl * np.log2(1 + dl).sum() + self.a2 * np.log2(1 + ul0).sum()
        if self.overlap:
            total += self.a1 * np.log2(1 + ul1).sum()
        return float(total)

    def slacks(self, st: SlotState) -> np.ndarray:
        """Relative QoS and power slacks (``gamma / gamma_th - 1`` style)."""
        dl, ul1, ul0, sens = self.sinrs(st)
        out = [dl / self.th_dl - 1, ul0 / self.th_ul - 1]
        if self.overlap:
            out.append(ul1 / self.th_ul - 1)
        if self.J:
            out.append(sens / self.th_sens - 1)
        power = np.trace(st.W, axis1=1, axis2=2).real.sum()
        if self.psi:
            power += np.trace(st.R, axis1=1, axis2=2).real.sum()
        out.append(np.array([1.0 - power]))
        return np.concatenate(out)

    def feasible(self, st: SlotState, tol: float = 1e-6) -> bool:
        return bool(np.min(self.slacks(st)) >= -tol)
