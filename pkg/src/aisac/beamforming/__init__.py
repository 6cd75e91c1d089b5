"""Alternating fractional-programming beamforming for one slot."""

from .alternating import BeamformingResult, alternating_optimize, initial_state, restore_feasibility
from .baselines import MODES as BASELINE_MODES, baseline_beamformers, random_unit_vectors
from .auxiliary import (AuxiliaryState, dual_transform_value, optimal_delta, optimal_epsilon,
                        quadratic_transform_value, update_delta, update_epsilon, update_theta,
                        upper_bound)
from .problem import SlotProblem, SlotState
from .subproblems import (InfeasibleError, dl_transmit_loop, gev_receive, sensing_transmit_loop,
                          solve_dl_transmit, solve_sensing_receive, solve_sensing_transmit,
                          solve_ul_receive)

__all__ = [
    "AuxiliaryState",
    "BASELINE_MODES",
    "BeamformingResult",
    "InfeasibleError",
    "SlotProblem",
    "SlotState",
    "alternating_optimize",
    "baseline_beamformers",
    "dl_transmit_loop",
    "dual_transform_value",
    "gev_receive",
    "initial_state",
    "optimal_delta",
    "optimal_epsilon",
    "quadratic_transform_value",
    "random_unit_vectors",
    "restore_feasibility",
    "sensing_transmit_loop",
    "solve_dl_transmit",
    "solve_sensing_receive",
    "solve_sensing_transmit",
    "solve_ul_receive",
    "update_delta",
    "update_epsilon",
    "update_theta",
    "upper_bound",
]
