"""Episode bookkeeping shared by training and evaluation: dilemma windows,
per-step rewards, charging activity, and the final episode log."""

from __future__ import annotations

import numpy as np

from .env import StepEvents
from .metrics import EpisodeLog
from .reward import (DilemmaWindow, RewardBreakdown, cuav_reward,
                     detect_dilemma, muav_reward)
from .world import WorldState


class EpisodeTracker:
    """Accumulates everything reward- and metric-related over one episode."""

    def __init__(self, state: WorldState):
        self.config = state.config
        m = state.num_muavs
        self.windows = [DilemmaWindow() for _ in range(m)]
        for w, uav in zip(self.windows, state.muavs()):
            w.push(uav.pos)
        self.active_steps = np.zeros(state.num_cuavs, dtype=np.int64)
        n = len(state.uavs)
        self.component_totals = np.zeros((n, 5))  # h, iota, pl, pb, total

    def after_step(self, state: WorldState, events: StepEvents) -> list[RewardBreakdown]:
        """Per-agent reward breakdowns for the transition just executed."""
        cfg = self.config
        breakdowns: list[RewardBreakdown] = []
        for m in range(state.num_muavs):
            self.windows[m].push(state.uavs[m].pos)
            dilemma = detect_dilemma(self.windows[m], cfg.sense_radius)
            breakdowns.append(muav_reward(events, dilemma, m, cfg))
        for ci in range(state.num_cuavs):
            c = state.num_muavs + ci
            if events.charge[ci].delivered > 0.0:
                self.active_steps[ci] += 1
            breakdowns.append(cuav_reward(state, events, c, cfg))
        for u, bd in enumerate(breakdowns):
            self.component_totals[u] += (bd.h, bd.iota, bd.pl, bd.pb, bd.total)
        return breakdowns

    def episode_log(self, state: WorldState) -> EpisodeLog:
        muavs = state.muavs()
        return EpisodeLog(
            poi_m0=state.poi_m0.copy(),
            poi_mT=state.poi_rem.copy(),
            muav_er0=np.array([u.er0 for u in muavs]),
            muav_ec=np.array([u.ec for u in muavs]),
            muav_ed=np.array([u.ed for u in muavs]),
            cuav_active_steps=self.active_steps.copy(),
            e_max=state.config.e_max,
            length=state.t,
            terminated_by=state.done_reason or "running",
        )

    def reward_components(self) -> list[dict]:
        keys = ("h", "iota", "pl", "pb", "total")
        return [dict(zip(keys, map(float, row))) for row in self.component_totals]
