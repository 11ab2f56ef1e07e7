"""Evaluation surface: scripted baselines, checkpoint-backed policies, and
the noise-free episode runner that produces metric reports and trajectory
exports."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .env import observe, step, write_poi_csv, write_trajectory_csv
from .errors import ConfigError
from .hetgraph import local_feature_batch, local_neighbors, local_template
from .metrics import compute_all
from .neural import forward
from .rollout import EpisodeTracker
from .training import load_actor_networks
from .world import CUAV, MUAV, WorldConfig, WorldState, generate_scenario

POLICY_KINDS = ("greedy", "random", "hgam", "hgam_no_gat")


def greedy_policy(state: WorldState, u: int) -> np.ndarray:
    """Nearest-target heuristic: MUAVs head for the closest PoI with data
    left and dwell once inside sensing range; CUAVs shadow the lowest-battery
    MUAV. No obstacle avoidance on purpose."""
    uav = state.uavs[u]
    if uav.kind == MUAV:
        live = state.poi_rem > 0.0
        if not np.any(live):
            return np.zeros(2)
        dists = np.linalg.norm(state.poi_xy - uav.pos, axis=1)
        masked = np.where(live, dists, np.inf)
        p = int(np.argmin(masked))
        if masked[p] <= state.config.sense_radius:
            return np.zeros(2)
        direction = state.poi_xy[p] - uav.pos
    else:
        muavs = state.muavs()
        if not muavs:
            return np.zeros(2)
        target = int(np.argmin([m.er for m in muavs]))
        offset = muavs[target].pos - uav.pos
        if float(np.linalg.norm(offset)) <= state.config.charge_radius:
            return np.zeros(2)
        direction = offset
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return np.zeros(2)
    return direction / norm


def random_policy(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=2)


class GreedyPolicy:
    name = "greedy"

    def reset(self, episode_seed: int) -> None:
        pass

    def actions(self, state: WorldState, observations) -> list[np.ndarray]:
        return [greedy_policy(state, u) for u in range(len(state.uavs))]


class RandomPolicy:
    name = "random"

    def __init__(self):
        self._rng = np.random.default_rng(0)

    def reset(self, episode_seed: int) -> None:
        self._rng = np.random.default_rng(np.random.SeedSequence((episode_seed, 1)))

    def actions(self, state: WorldState, observations) -> list[np.ndarray]:
        return [random_policy(self._rng) for _ in state.uavs]


class ActorPolicy:
    """Decentralized execution of trained actors on local graphs."""

    def __init__(self, actors, config: WorldConfig, use_gat: bool = True):
        self.name = "hgam" if use_gat else "hgam_no_gat"
        self.config = config
        self.use_gat = use_gat
        self.actors = actors
        self.kinds = [MUAV] * config.num_muavs + [CUAV] * config.num_cuavs
        self.templates = {k: local_template(config, k) for k in dict.fromkeys(self.kinds)}

    @classmethod
    def from_checkpoint(cls, checkpoint_path, config: WorldConfig,
                        use_gat: bool = True) -> "ActorPolicy":
        return cls(load_actor_networks(checkpoint_path, config), config, use_gat)

    def reset(self, episode_seed: int) -> None:
        pass

    def actions(self, state: WorldState, observations) -> list[np.ndarray]:
        width = max(len(o) for o in observations)
        obs_rows = np.zeros((1, len(observations), width))
        for u, o in enumerate(observations):
            obs_rows[0, u, : len(o)] = o
        nbr_rows = np.full((1, len(observations), 2), -1, dtype=np.int64)
        for u in range(len(observations)):
            mn, cn = local_neighbors(state, u)
            nbr_rows[0, u, 0] = -1 if mn is None else mn
            nbr_rows[0, u, 1] = -1 if cn is None else cn
        out = []
        for u, uav in enumerate(state.uavs):
            feats, mask = local_feature_batch(obs_rows, nbr_rows, u,
                                              [x.kind for x in state.uavs],
                                              self.config)
            tpl = self.templates[uav.kind]
            action = forward(self.actors[u], feats, tpl.kinds, 0, mask,
                             self.use_gat).out[0]
            out.append(np.clip(action, -1.0, 1.0))
        return out


def make_policy(kind: str, config: WorldConfig, checkpoint=None):
    if kind == "greedy":
        return GreedyPolicy()
    if kind == "random":
        return RandomPolicy()
    if kind in ("hgam", "hgam_no_gat"):
        if checkpoint is None:
            raise ConfigError(f"policy {kind!r} requires --checkpoint")
        return ActorPolicy.from_checkpoint(checkpoint, config,
                                           use_gat=(kind == "hgam"))
    raise ConfigError(f"unknown policy {kind!r}; expected one of {POLICY_KINDS}")


METRIC_KEYS = ("C", "omega", "upsilon", "D", "F", "C_times_omega", "D_times_F",
               "episode_len")


def run_episode(policy, config: WorldConfig, episode_seed: int,
                traj_rows: list | None = None):
    """One noise-free episode; returns (metrics row, tracker)."""
    state = generate_scenario(config, episode_seed)
    policy.reset(episode_seed)
    tracker = EpisodeTracker(state)
    reward_sums = np.zeros(len(state.uavs))
    while not state.done:
        observations = [observe(state, u) for u in range(len(state.uavs))]
        actions = policy.actions(state, observations)
        _, events = step(state, actions)
        breakdowns = tracker.after_step(state, events)
        for u, bd in enumerate(breakdowns):
            reward_sums[u] += bd.total
        if traj_rows is not None:
            for u, uav in enumerate(state.uavs):
                m = state.num_muavs
                collected = float(events.collected[u]) if u < m else 0.0
                outcome = events.charge[u - m] if u >= m else None
                charged_to = "" if outcome is None or outcome.target is None \
                    else outcome.target
                traj_rows.append([state.t, u, uav.kind,
                                  float(uav.pos[0]), float(uav.pos[1]),
                                  uav.er, uav.ec, uav.ed, collected,
                                  charged_to, breakdowns[u].total])
    row = dict(compute_all(tracker.episode_log(state)))
    row["seed"] = episode_seed
    m = state.num_muavs
    row["reward_muav_mean"] = float(np.mean(reward_sums[:m])) if m else 0.0
    row["reward_cuav_mean"] = (float(np.mean(reward_sums[m:]))
                               if state.num_cuavs else 0.0)
    row["reward_components"] = tracker.reward_components()
    return row, state, tracker


def evaluate(policy, world_config: WorldConfig, episodes: int, seed: int,
             out_dir=None, export_traj: bool = False) -> dict:
    """Noise-free evaluation over `episodes` episodes seeded seed+i; returns
    the report (also written as JSON when out_dir is given)."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    if world_config.num_muavs < 1 or world_config.num_cuavs < 1:
        raise ConfigError("evaluation needs at least one MUAV and one CUAV "
                          "(the report metrics are undefined otherwise)")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(episodes):
        traj_rows = [] if export_traj else None
        row, state, tracker = run_episode(policy, world_config, seed + i, traj_rows)
        rows.append(row)
        if export_traj and out is not None:
            write_trajectory_csv(out / f"trajectory_ep{i:04d}.csv", traj_rows)
            write_poi_csv(out / f"pois_ep{i:04d}.csv", state)
            components = {"episode_seed": seed + i,
                          "per_agent": tracker.reward_components()}
            with open(out / f"reward_components_ep{i:04d}.json", "w",
                      encoding="utf-8") as fh:
                json.dump(components, fh, indent=2, sort_keys=True)

    aggregate = {}
    for key in METRIC_KEYS + ("reward_muav_mean", "reward_cuav_mean"):
        vals = np.array([row[key] for row in rows], dtype=float)
        aggregate[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    report = {
        "policy": policy.name,
        "episodes": episodes,
        "seed": seed,
        "per_episode": rows,
        "aggregate": aggregate,
    }
    if out is not None:
        with open(out / "evaluation_report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return report
