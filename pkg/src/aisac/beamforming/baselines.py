"""Reference beamformers: optimized directions with equal powers, and random
directions with equal powers.  Both use matched-filter receivers."""

from __future__ import annotations

import numpy as np

from ..lifted import LiftedBeamformerSet
from ..scenario import ChannelSet, ScenarioConfig, steering_vector
from .alternating import BeamformingResult, alternating_optimize
from .subproblems import InfeasibleError

MODES = ("equal-power", "random")


def _unit(v):
    v = np.asarray(v, complex)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def _matched_filters(ch: ChannelSet, psi: int):
    V = np.array([np.outer(u, u.conj()) for u in map(_unit, ch.h)])
    if not psi:
        return V, None
    bs = [_unit(steering_vector(th, ch.Q)) for th in ch.theta_sens]
    U = np.array([np.outer(b, b.conj()) for b in bs]).reshape(ch.J, ch.Q, ch.Q)
    return V, U


def random_unit_vectors(rng: np.random.Generator, n: int, Q: int) -> np.ndarray:
    """Uniform on the complex unit sphere (normalized circular Gaussians)."""
    z = rng.standard_normal((n, Q)) + 1j * rng.standard_normal((n, Q))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _transmit_directions(ch, psi, cfg, optimized, optimize):
    """Unit directions of an optimized set, or MRT/steering when unavailable."""
    dirs_w = [_unit(h) for h in ch.h]
    dirs_r = [_unit(steering_vector(th, ch.Q)) for th in ch.theta_sens] if psi else []
    if optimized is None:
        if not optimize:
            return dirs_w, dirs_r
        try:
            optimized = alternating_optimize(ch, psi, cfg)
        except InfeasibleError:
            return dirs_w, dirs_r
    lifted = optimized.lifted if isinstance(optimized, BeamformingResult) else optimized
    lifted = lifted if lifted.w is not None else lifted.extracted()
    dirs_w = [_unit(w) if np.linalg.norm(w) > 0 else d for w, d in zip(lifted.w, dirs_w)]
    if psi:
        dirs_r = [_unit(r) if np.linalg.norm(r) > 0 else d for r, d in zip(lifted.r, dirs_r)]
    return dirs_w, dirs_r


def baseline_beamformers(mode: str, ch: ChannelSet, psi: int, cfg: ScenarioConfig,
                         rng: np.random.Generator | None = None,
                         optimized: BeamformingResult | LiftedBeamformerSet | None = None,
                         optimize: bool = True) -> LiftedBeamformerSet:
    """Equal per-stream power ``P_max / (K + psi * J)`` along chosen directions.

    ``equal-power`` takes directions from ``optimized``.  When that is not
    supplied it is computed here if ``optimize`` is set; MRT and steering
    directions stand in when the slot is infeasible or ``optimize`` is off.
    ``random`` draws them from ``rng``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown baseline mode {mode!r}; expected one of {MODES}")
    K, J, Q = ch.K, (ch.J if psi else 0), ch.Q
    power = cfg.uav_max_power / (K + J)
    if mode == "random":
        rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
        dirs = random_unit_vectors(rng, K + J, Q)
        dirs_w, dirs_r = list(dirs[:K]), list(dirs[K:])
    else:
        dirs_w, dirs_r = _transmit_directions(ch, psi, cfg, optimized, optimize)
    W = np.array([power * np.outer(d, d.conj()) for d in dirs_w])
    V, U = _matched_filters(ch, psi)
    if psi:
        R = np.array([power * np.outer(d, d.conj()) for d in dirs_r]).reshape(J, Q, Q)
        return LiftedBeamformerSet.create(W, V, R, U).extracted()
    return LiftedBeamformerSet.create(W, V).extracted()
