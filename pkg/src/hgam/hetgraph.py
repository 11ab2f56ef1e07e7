"""Typed UAV graphs for the attention networks.

Actors consume a local graph (ego plus its nearest neighbor of each agent
type); critics consume an all-to-all graph whose node features append the
joint actions. All node features are padded to one fleet-wide width so a
field's offset never depends on fleet composition:

    local:  [obs padded to max obs width | type one-hot(2)]
    global: [obs padded to max obs width | action(2) | type one-hot(2)]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import max_obs_len
from .world import CUAV, MUAV, WorldConfig, WorldState

ACTION_WIDTH = 2
TYPE_ONE_HOT = {MUAV: (1.0, 0.0), CUAV: (0.0, 1.0)}


def local_feature_width(config: WorldConfig) -> int:
    return max_obs_len(config) + 2


def global_feature_width(config: WorldConfig) -> int:
    return max_obs_len(config) + ACTION_WIDTH + 2


def global_action_slice(config: WorldConfig) -> slice:
    """Where the node's own action sits inside a global-graph feature row."""
    w = max_obs_len(config)
    return slice(w, w + ACTION_WIDTH)


def local_node_feature(obs: np.ndarray, kind: str, config: WorldConfig) -> np.ndarray:
    out = np.zeros(local_feature_width(config))
    out[: len(obs)] = obs
    out[-2:] = TYPE_ONE_HOT[kind]
    return out


def global_node_feature(obs: np.ndarray, action: np.ndarray, kind: str,
                        config: WorldConfig) -> np.ndarray:
    out = np.zeros(global_feature_width(config))
    out[: len(obs)] = obs
    out[global_action_slice(config)] = action
    out[-2:] = TYPE_ONE_HOT[kind]
    return out


@dataclass
class HeteroGraph:
    """Nodes with padded feature rows; edges point neighbor -> ego (the
    direction embeddings are aggregated). The ego has no self-loop."""

    node_ids: list[int]          # agent indices
    node_kinds: list[str]
    features: np.ndarray         # (n, F)
    ego: int                     # index into the node list
    edges: list[tuple[int, int]]

    def neighbor_indices(self) -> list[int]:
        return [src for src, dst in self.edges if dst == self.ego]


def local_neighbors(state: WorldState, u: int) -> tuple[int | None, int | None]:
    """Nearest other MUAV and nearest CUAV (fleet-wide via the global link,
    optionally capped by comm_radius). Ties break to the lowest index."""
    cfg = state.config
    me = state.uavs[u]
    best: dict[str, tuple[float, int]] = {}
    for i, other in enumerate(state.uavs):
        if i == u:
            continue
        d = float(np.linalg.norm(other.pos - me.pos))
        if cfg.comm_radius is not None and d > cfg.comm_radius:
            continue
        cur = best.get(other.kind)
        if cur is None or (d, i) < cur:
            best[other.kind] = (d, i)
    muav_nbr = best.get(MUAV, (0.0, None))[1]
    cuav_nbr = best.get(CUAV, (0.0, None))[1]
    return muav_nbr, cuav_nbr


def build_local_graph(state: WorldState, u: int, observations) -> HeteroGraph:
    """Ego plus at most one neighbor per agent type; every neighbor has an
    edge into the ego."""
    cfg = state.config
    ids = [u]
    muav_nbr, cuav_nbr = local_neighbors(state, u)
    for nbr in (muav_nbr, cuav_nbr):
        if nbr is not None:
            ids.append(nbr)
    kinds = [state.uavs[i].kind for i in ids]
    feats = np.stack([local_node_feature(observations[i], state.uavs[i].kind, cfg)
                      for i in ids])
    edges = [(k, 0) for k in range(1, len(ids))]
    return HeteroGraph(ids, kinds, feats, 0, edges)


def build_global_graph(state: WorldState, observations, actions) -> list[HeteroGraph]:
    """Complete directed graph over the fleet with observation+action node
    features; one view per ego (shared nodes/edges, different ego index)."""
    cfg = state.config
    n = len(state.uavs)
    kinds = [uav.kind for uav in state.uavs]
    feats = np.stack([global_node_feature(observations[i], np.asarray(actions[i]),
                                          kinds[i], cfg) for i in range(n)])
    edges = [(i, j) for j in range(n) for i in range(n) if i != j]
    return [HeteroGraph(list(range(n)), kinds, feats, u, edges) for u in range(n)]


# ---------------------------------------------------------------------------
# fixed per-agent templates for batched replay processing

@dataclass(frozen=True)
class LocalTemplate:
    """Node layout of one agent's local graph: ego first, then the MUAV
    neighbor slot, then the CUAV neighbor slot (slots exist whenever the
    fleet could supply such a neighbor; per-sample absence is masked)."""

    kinds: tuple[str, ...]
    has_muav_slot: bool
    has_cuav_slot: bool


def local_template(config: WorldConfig, ego_kind: str) -> LocalTemplate:
    others_muav = config.num_muavs - (1 if ego_kind == MUAV else 0)
    others_cuav = config.num_cuavs - (1 if ego_kind == CUAV else 0)
    kinds = [ego_kind]
    if others_muav > 0:
        kinds.append(MUAV)
    if others_cuav > 0:
        kinds.append(CUAV)
    return LocalTemplate(tuple(kinds), others_muav > 0, others_cuav > 0)


def local_feature_batch(obs: np.ndarray, nbrs: np.ndarray, ego: int,
                        kinds: list[str], config: WorldConfig):
    """Assemble (B, n_nodes, F) local-graph features for one ego agent from
    replay rows.

    obs: (B, U, W) padded observations; nbrs: (B, U, 2) neighbor indices
    (column 0 = MUAV neighbor, 1 = CUAV neighbor, -1 = absent). Returns
    (features, neighbor mask (B, n_nodes-1)).
    """
    tpl = local_template(config, kinds[ego])
    b = obs.shape[0]
    width = local_feature_width(config)
    n_nodes = len(tpl.kinds)
    feats = np.zeros((b, n_nodes, width))
    mask = np.zeros((b, n_nodes - 1), dtype=bool)

    feats[:, 0, : obs.shape[2]] = obs[:, ego, :]
    feats[:, 0, -2:] = TYPE_ONE_HOT[kinds[ego]]

    slot = 1
    for col, flag, kind in ((0, tpl.has_muav_slot, MUAV), (1, tpl.has_cuav_slot, CUAV)):
        if not flag:
            continue
        idx = nbrs[:, ego, col]
        present = idx >= 0
        safe = np.where(present, idx, 0)
        rows = obs[np.arange(b), safe, :]
        rows = np.where(present[:, None], rows, 0.0)
        feats[:, slot, : obs.shape[2]] = rows
        feats[:, slot, -2:] = np.where(present[:, None], TYPE_ONE_HOT[kind], 0.0)
        mask[:, slot - 1] = present
        slot += 1
    return feats, mask


def global_feature_batch(obs: np.ndarray, actions: np.ndarray,
                         kinds: list[str], config: WorldConfig) -> np.ndarray:
    """(B, U, F) global-graph features from replay rows of padded
    observations (B, U, W) and joint actions (B, U, 2)."""
    b, n, w = obs.shape
    feats = np.zeros((b, n, global_feature_width(config)))
    feats[:, :, :w] = obs
    feats[:, :, global_action_slice(config)] = actions
    for i, kind in enumerate(kinds):
        feats[:, i, -2:] = TYPE_ONE_HOT[kind]
    return feats
