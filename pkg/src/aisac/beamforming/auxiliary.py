"""Closed-form auxiliary updates of the fractional-programming transforms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import LN2, SlotProblem, SlotState

CHI_FLOOR = 1e-9


@dataclass
class AuxiliaryState:
    """Per-UE auxiliaries; ``ul`` entries refer to the echo-overlapped uplink."""

    delta_dl: np.ndarray
    delta_ul: np.ndarray
    eps_dl: np.ndarray | None = None
    eps_ul: np.ndarray | None = None
    chi_dl: np.ndarray | None = None
    chi_ul: np.ndarray | None = None
    theta_dl: np.ndarray | None = None
    theta_ul: np.ndarray | None = None


def dual_transform_value(t, delta, signal, interference):
    """``t (log(1+d) - d) + t (1+d) S / (S + I)``; maximized over ``d`` at ``S / I``."""
    return t * (np.log1p(delta) - delta) + t * (1 + delta) * signal / (signal + interference)


def quadratic_transform_value(eps, C, D):
    """``2 e sqrt(C) - e^2 D``; maximized over ``e`` at ``sqrt(C) / D``."""
    return 2 * eps * np.sqrt(C) - eps ** 2 * D


def optimal_delta(signal, interference):
    return np.asarray(signal, float) / np.asarray(interference, float)


def optimal_epsilon(C, D):
    C = np.asarray(C, float)
    return np.sqrt(np.maximum(C, 0.0)) / np.asarray(D, float)


def update_theta(phi, chi):
    """``Theta = Phi / chi`` with ``chi`` floored away from zero."""
    return np.asarray(phi, float) / np.maximum(np.asarray(chi, float), CHI_FLOOR)


def upper_bound(phi, chi, theta):
    """Convex majorant ``Phi^2 / (2 Theta) + Theta chi^2 / 2`` of ``chi * Phi``."""
    return phi ** 2 / (2 * theta) + theta * chi ** 2 / 2


def update_delta(prob: SlotProblem, st: SlotState) -> AuxiliaryState:
    """Optimal dual-transform auxiliaries: the current SINRs."""
    s, i = prob.dl_parts(st)
    su, iu = prob.ul_parts(st, 1)
    return AuxiliaryState(optimal_delta(s, i), optimal_delta(su, iu))


def ratio_terms(prob: SlotProblem, st: SlotState, aux: AuxiliaryState):
    """``C`` and ``D`` of the quadratic transform for downlink and overlapped uplink."""
    s, i = prob.dl_parts(st)
    su, iu = prob.ul_parts(st, 1)
    t_dl = prob.a_dl / LN2
    t_ul = prob.a1 / LN2
    C_dl = t_dl * (1 + aux.delta_dl) * s
    C_ul = t_ul * (1 + aux.delta_ul) * su
    return C_dl, s + i, C_ul, su + iu


def update_epsilon(prob: SlotProblem, st: SlotState, aux: AuxiliaryState) -> AuxiliaryState:
    C_dl, D_dl, C_ul, D_ul = ratio_terms(prob, st, aux)
    aux.eps_dl = optimal_epsilon(C_dl, D_dl)
    aux.eps_ul = optimal_epsilon(C_ul, D_ul)
    return aux
