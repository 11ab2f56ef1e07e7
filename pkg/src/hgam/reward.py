"""Per-agent rewards: collection/charging payoffs, fairness shaping, the
CUAV neglect and hierarchical penalties, and the circling-detector that
flags an MUAV stuck revisiting the same patch."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .env import ChargeOutcome, StepEvents
from .metrics import jain_index
from .world import WorldConfig, WorldState, circle_overlap_area

# positions kept per MUAV for the circling test
DILEMMA_WINDOW = 10


@dataclass
class RewardBreakdown:
    h: float      # task payoff (collection for MUAVs, fair charging for CUAVs)
    iota: float   # movement/discovery bonus for MUAVs; neglect penalty for CUAVs
    pl: float     # behavioural penalty (idle rotation / charging hierarchy)
    pb: float     # collision and laser-warning penalty
    total: float


def fairness_factor(muav_states, config: WorldConfig) -> float:
    """Weighted blend of two Jain indices: charged-energy fractions and
    remaining battery levels across MUAVs."""
    ec_frac = [min(u.ec / config.e_max, 1.0) for u in muav_states]
    er_vals = [max(u.er, 0.0) for u in muav_states]
    fc = jain_index(ec_frac)
    fr = jain_index(er_vals)
    return config.w_f * fc + (1.0 - config.w_f) * fr


def _safety_penalty(events: StepEvents, u: int, config: WorldConfig) -> float:
    pb = 0.0
    if events.collided[u]:
        pb += config.collision_penalty
    if events.min_laser[u] < config.laser_warn_dist:
        pb += config.laser_penalty
    return pb


def muav_reward(events: StepEvents, dilemma: bool, m: int,
                config: WorldConfig) -> RewardBreakdown:
    c = float(events.collected[m])
    h = config.w_c * c
    iota = config.w_l * float(events.dist_moved[m]) \
        + config.discovery_bonus * len(events.discovered[m])
    pl = config.rotation_penalty if (dilemma and c == 0.0) else 0.0
    pb = _safety_penalty(events, m, config)
    return RewardBreakdown(h, iota, pl, pb, h + iota - pl - pb)


def cuav_neglect_penalty(state: WorldState, c: int, config: WorldConfig) -> float:
    """Distance-plus-urgency penalty anchored on the lowest-battery MUAV
    (ties go to the lowest index). Battery levels below zero count as empty."""
    muavs = state.muavs()
    ers = np.array([u.er for u in muavs])
    i = int(np.argmin(ers))
    dist = float(np.linalg.norm(state.uavs[c].pos - muavs[i].pos))
    return config.w_d * dist + config.w_e * max(float(ers[i]), 0.0)


def cuav_hierarchical_penalty(outcome: ChargeOutcome, config: WorldConfig) -> float:
    """Exactly one of four cases, checked in order: idle, target already
    full, target above the fleet-mean battery, or a sensible charge."""
    plow = config.plow
    if outcome.target is None:
        return plow
    if outcome.target_full:
        return 1.2 * plow
    if outcome.target_er > outcome.muav_er_mean:
        return plow / 3.0
    return plow / 4.0


def cuav_reward(state: WorldState, events: StepEvents, c: int,
                config: WorldConfig) -> RewardBreakdown:
    outcome = events.charge[c - state.num_muavs]
    if outcome.delivered > 0.0:
        h = config.w_e * fairness_factor(state.muavs(), config)
        iota = 0.0
    else:
        h = 0.0
        iota = cuav_neglect_penalty(state, c, config)
    pl = cuav_hierarchical_penalty(outcome, config)
    pb = _safety_penalty(events, c, config)
    return RewardBreakdown(h, iota, pl, pb, h - iota - pl - pb)


class DilemmaWindow:
    """Ring buffer of an MUAV's recent positions."""

    def __init__(self, size: int = DILEMMA_WINDOW):
        self.size = size
        self._buf: deque = deque(maxlen=size)

    def push(self, pos) -> None:
        self._buf.append(np.asarray(pos, dtype=float).copy())

    def positions(self) -> list[np.ndarray]:
        return list(self._buf)

    def clear(self) -> None:
        self._buf.clear()

    def __len__(self) -> int:
        return len(self._buf)


def detect_dilemma(window: DilemmaWindow, sense_radius: float) -> bool:
    """True when the sensing disk at the window's oldest position overlaps
    some later position more than it overlaps its immediate successor,
    i.e. the UAV curled back instead of moving on. Strict comparison, so a
    stationary UAV does not trigger."""
    pts = window.positions()
    if len(pts) < 3:
        return False
    base = circle_overlap_area(pts[0], pts[1], sense_radius)
    return any(circle_overlap_area(pts[0], p, sense_radius) > base
               for p in pts[2:])
