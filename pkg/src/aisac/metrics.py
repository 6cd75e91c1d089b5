"""SINRs, slot throughput and constraint audit for one slot.

Interference is evaluated in the lifted power-sum form (sum of traces),
i.e. the expectation over independent unit-variance symbols.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .lifted import LiftedBeamformerSet
from .scenario import ChannelSet, ScenarioConfig

__all__ = [
    "LinkReport",
    "SlotTiming",
    "check_constraints",
    "dl_sinr",
    "link_report",
    "link_report_rows",
    "sensing_sinr",
    "slot_throughput",
    "slot_timing",
    "ul_sinr",
]

PSD_TOL = 1e-8


@dataclass(frozen=True)
class SlotTiming:
    t_dl: float
    t_ul1: float
    t_ul2: float

    @property
    def tau(self) -> float:
        return 2.0 * self.t_dl

    @property
    def weights(self) -> tuple[float, float, float]:
        """Durations as fractions of a half slot."""
        half = self.t_dl
        if half <= 0:
            return 0.0, 0.0, 0.0
        return 1.0, self.t_ul1 / half, self.t_ul2 / half


def slot_timing(tau: float, psi: int, overlap_fraction: float = 0.5) -> SlotTiming:
    """Half slot downlink; uplink split by the echo overlap fraction."""
    half = tau / 2.0
    t1 = overlap_fraction * half if psi else 0.0
    return SlotTiming(half, t1, half - t1)


def _tr(A, B):
    return float(np.real(np.vdot(A.conj().T, B)))


def _quad(h, X):
    return float(np.real(np.vdot(h, X @ h)))


def _check_dims(lifted, ch):
    if lifted.Q != ch.Q:
        raise ValueError(f"beamformers have Q={lifted.Q}, channels have Q={ch.Q}")


def dl_interference(lifted: LiftedBeamformerSet, ch: ChannelSet, psi: int, k: int,
                    cfg: ScenarioConfig) -> float:
    h = ch.h[k]
    total = sum(_quad(h, lifted.W[i]) for i in range(len(lifted.W)) if i != k)
    if psi:
        total += sum(_quad(h, R) for R in lifted.R)
    return total + cfg.noise_dl


def dl_sinr(lifted: LiftedBeamformerSet, ch: ChannelSet, psi: int, k: int,
            cfg: ScenarioConfig) -> float:
    _check_dims(lifted, ch)
    return _quad(ch.h[k], lifted.W[k]) / dl_interference(lifted, ch, psi, k, cfg)


def echo_matrix(lifted: LiftedBeamformerSet, ch: ChannelSet) -> np.ndarray:
    """``sum_j G_j X G_j^H`` with ``X = sum R + sum W``; echo power seen by V
    is ``tr(V E)``."""
    X = lifted.transmit_sum()
    Q = ch.Q
    E = np.zeros((Q, Q), complex)
    for G in ch.G:
        E += G @ X @ G.conj().T
    return E


def ul_interference(lifted: LiftedBeamformerSet, ch: ChannelSet, xi: int, k: int,
                    cfg: ScenarioConfig) -> float:
    V = lifted.V[k]
    p = cfg.ue_tx_power
    total = sum(p[i] * _quad(ch.h[i], V) for i in range(ch.K) if i != k)
    if xi:
        total += _tr(V, echo_matrix(lifted, ch))
    return total + cfg.noise_ul


def ul_sinr(lifted: LiftedBeamformerSet, ch: ChannelSet, xi: int, k: int,
            cfg: ScenarioConfig) -> float:
    _check_dims(lifted, ch)
    signal = cfg.ue_tx_power[k] * _quad(ch.h[k], lifted.V[k])
    return signal / ul_interference(lifted, ch, xi, k, cfg)


def sensing_terms(lifted: LiftedBeamformerSet, ch: ChannelSet, j: int) -> np.ndarray:
    """``Phi[i] = tr(U_j G_i (R_i + sum W) G_i^H)`` for every location i."""
    Wsum = lifted.W.sum(axis=0)
    U = lifted.U[j]
    out = np.empty(ch.J)
    for i, G in enumerate(ch.G):
        out[i] = _tr(U, G @ (lifted.R[i] + Wsum) @ G.conj().T)
    return out


def sensing_sinr(lifted: LiftedBeamformerSet, ch: ChannelSet, j: int,
                 cfg: ScenarioConfig) -> float:
    _check_dims(lifted, ch)
    phi = sensing_terms(lifted, ch, j)
    clutter = phi.sum() - phi[j]
    return cfg.processing_gain * phi[j] / (clutter + cfg.noise_sens)


def slot_throughput(dl, ul_overlap, ul_clean, timing: SlotTiming) -> float:
    """Sum over UEs of the downlink and uplink rates in bit/s/Hz."""
    a_dl, a1, a2 = timing.weights
    dl = np.asarray(dl, float)
    ul1 = np.asarray(ul_overlap, float)
    ul2 = np.asarray(ul_clean, float)
    total = a_dl * np.log2(1.0 + dl).sum() + a2 * np.log2(1.0 + ul2).sum()
    if a1 > 0:
        total += a1 * np.log2(1.0 + ul1).sum()
    return float(total)


def all_sinrs(lifted, ch, psi, cfg):
    K = ch.K
    dl = np.array([dl_sinr(lifted, ch, psi, k, cfg) for k in range(K)])
    ul1 = np.array([ul_sinr(lifted, ch, 1 if psi else 0, k, cfg) for k in range(K)])
    ul0 = np.array([ul_sinr(lifted, ch, 0, k, cfg) for k in range(K)])
    sens = np.array([sensing_sinr(lifted, ch, j, cfg) for j in range(ch.J)]) if psi and lifted.sensing else np.zeros(0)
    return dl, ul1, ul0, sens


def objective(lifted, ch, psi, cfg, timing) -> float:
    """Slot throughput (bit/s/Hz) of a beamformer set."""
    dl, ul1, ul0, _ = all_sinrs(lifted, ch, psi, cfg)
    return slot_throughput(dl, ul1, ul0, timing)


# --------------------------------------------------------------------------
# Constraint audit
# --------------------------------------------------------------------------


def _rel_slack(value, threshold):
    if threshold > 0:
        return (value - threshold) / threshold
    return value


def check_constraints(lifted: LiftedBeamformerSet, ch: ChannelSet, psi: int,
                      cfg: ScenarioConfig, timing: SlotTiming | None = None) -> dict:
    """Relative slack per constraint; ``None`` marks "not applicable".

    SINR slacks are ``gamma / gamma_th - 1``, the power slack is
    ``1 - used / P_max``, trace slacks are ``-|tr - 1|`` and PSD slacks are
    ``lambda_min / scale + 1e-8`` (scale ``P_max`` for
    transmit matrices, 1 for receive matrices).  The uplink QoS is checked on the
    echo-overlapped branch only when that branch has airtime.
    """
    dl, ul1, ul0, sens = all_sinrs(lifted, ch, psi, cfg)
    slack = {}
    for j in range(ch.J):
        slack[f"sens_sinr[{j}]"] = (_rel_slack(sens[j], cfg.sinr_th_sens)
                                    if psi and lifted.sensing else None)
    overlap_active = psi and (timing is None or timing.t_ul1 > 0)
    for k in range(ch.K):
        slack[f"dl_sinr[{k}]"] = _rel_slack(dl[k], cfg.sinr_th_dl)
        slack[f"ul_sinr_overlap[{k}]"] = _rel_slack(ul1[k], cfg.sinr_th_ul) if overlap_active else None
        slack[f"ul_sinr_clean[{k}]"] = _rel_slack(ul0[k], cfg.sinr_th_ul)
    used = float(np.trace(lifted.W, axis1=1, axis2=2).real.sum())
    if psi:
        used += float(np.trace(lifted.R, axis1=1, axis2=2).real.sum())
    slack["power"] = 1.0 - used / cfg.uav_max_power
    for k, V in enumerate(lifted.V):
        slack[f"trace_V[{k}]"] = -abs(np.trace(V).real - 1.0)
    if psi:
        for j, U in enumerate(lifted.U):
            slack[f"trace_U[{j}]"] = -abs(np.trace(U).real - 1.0)
    for name in ("W", "V", "R", "U"):
        if name in ("R", "U") and not psi:
            continue
        # transmit matrices are measured against the budget, receive ones are unit trace
        scale = cfg.uav_max_power if name in ("W", "R") else 1.0
        for i, X in enumerate(getattr(lifted, name)):
            w = np.linalg.eigvalsh((X + X.conj().T) / 2)
            slack[f"psd_{name}[{i}]"] = w[0] / scale + PSD_TOL
    return slack


def is_feasible(slacks: dict, tol: float = 1e-6) -> bool:
    return all(v >= -tol for v in slacks.values() if v is not None)


@dataclass
class LinkReport:
    dl_sinr: np.ndarray
    ul_sinr_overlap: np.ndarray
    ul_sinr_clean: np.ndarray
    sens_sinr: np.ndarray
    dl_rate: np.ndarray
    ul_rate: np.ndarray
    slot_throughput: float
    power_used: float
    feasible: bool
    slacks: dict = field(default_factory=dict)


def link_report(lifted: LiftedBeamformerSet, ch: ChannelSet, psi: int,
                cfg: ScenarioConfig, timing: SlotTiming, tol: float = 1e-6) -> LinkReport:
    dl, ul1, ul0, sens = all_sinrs(lifted, ch, psi, cfg)
    a_dl, a1, a2 = timing.weights
    dl_rate = a_dl * np.log2(1 + dl)
    ul_rate = a2 * np.log2(1 + ul0) + (a1 * np.log2(1 + ul1) if a1 > 0 else 0.0)
    slacks = check_constraints(lifted, ch, psi, cfg, timing)
    power = float(np.trace(lifted.W, axis1=1, axis2=2).real.sum())
    if psi:
        power += float(np.trace(lifted.R, axis1=1, axis2=2).real.sum())
    return LinkReport(dl, ul1, ul0, sens, dl_rate, ul_rate,
                      float(dl_rate.sum() + np.sum(ul_rate)), power,
                      is_feasible(slacks, tol), slacks)


def _db(x):
    return float(10 * np.log10(x)) if x > 0 else float("-inf")


def link_report_rows(report: LinkReport, slot: int) -> list[dict]:
    """One row per (slot, UE link or sensing location)."""
    rows = []
    s = report.slacks
    for k in range(len(report.dl_sinr)):
        rows.append(dict(slot=slot, entity=f"ue{k}:dl", sinr_db=_db(report.dl_sinr[k]),
                         rate=float(report.dl_rate[k]), slack=s.get(f"dl_sinr[{k}]")))
        ul_rate = float(np.broadcast_to(report.ul_rate, report.dl_rate.shape)[k])
        rows.append(dict(slot=slot, entity=f"ue{k}:ul_overlap",
                         sinr_db=_db(report.ul_sinr_overlap[k]), rate=ul_rate,
                         slack=s.get(f"ul_sinr_overlap[{k}]")))
        rows.append(dict(slot=slot, entity=f"ue{k}:ul_clean",
                         sinr_db=_db(report.ul_sinr_clean[k]), rate=ul_rate,
                         slack=s.get(f"ul_sinr_clean[{k}]")))
    for j in range(len(report.sens_sinr)):
        rows.append(dict(slot=slot, entity=f"sens{j}", sinr_db=_db(report.sens_sinr[j]),
                         rate=0.0, slack=s.get(f"sens_sinr[{j}]")))
    return rows


def link_reports_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["slot", "entity", "sinr_db", "rate", "slack"],
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        row = dict(row)
        for key in ("sinr_db", "rate", "slack"):
            v = row[key]
            row[key] = "" if v is None else f"{v:.12g}"
        writer.writerow(row)
    return buf.getvalue()
