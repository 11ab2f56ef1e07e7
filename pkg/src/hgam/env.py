"""Environment dynamics and observation assembly.

A step runs fixed phases: move, collision check, data collection, charging,
energy accounting, clock. Collection and charging are written so the exact
bookkeeping identities hold in floating point:

* every per-PoI take equals the float difference old - new of that PoI's
  remaining data (Sterbenz-safe for the default collect rate), so summed
  takes telescope to m0 - m_T exactly;
* remaining UAV energy is derived (er0 + ec - ed), never a third counter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError
from .world import MUAV, WorldConfig, WorldState

CAUSE_COLLISION = "collision"
CAUSE_ENERGY = "energy"
CAUSE_MAX_STEPS = "max_steps"

NUM_UAV_BLOCKS = 2   # nearest-other-UAV blocks in every observation
NUM_POI_BLOCKS = 5   # nearest-PoI blocks in MUAV observations


def clamp_action(a) -> np.ndarray:
    return np.clip(np.asarray(a, dtype=float).reshape(2), -1.0, 1.0)


def apply_action(pos: np.ndarray, a: np.ndarray, step_length: float) -> np.ndarray:
    """Move one full step_length along the action direction; zero action holds."""
    a = np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(a))
    if norm < 1e-9:
        return np.asarray(pos, dtype=float).copy()
    return np.asarray(pos, dtype=float) + (a / norm) * step_length


@dataclass
class ChargeOutcome:
    """One CUAV's charging result this step, with its decision-time context."""

    target: int | None        # MUAV index, or None if nobody in radius
    delivered: float
    wasted: float
    target_er: float          # target's remaining energy when the charge fired
    target_full: bool         # target had no headroom at that moment
    muav_er_mean: float       # fleet-mean remaining MUAV energy at that moment


@dataclass
class StepEvents:
    """Everything reward/metric code needs to know about one transition."""

    collected: np.ndarray                          # (M,) per-MUAV totals
    collection_breakdown: list[tuple[int, int, float]]  # (muav, poi, amount)
    dist_moved: np.ndarray                         # (U,)
    charge: list[ChargeOutcome]                    # per CUAV
    collided: np.ndarray                           # (U,) bool
    min_laser: np.ndarray                          # (U,)
    discovered: list[np.ndarray]                   # per MUAV, new PoI indices
    terminated: bool
    cause: str | None


@lru_cache(maxsize=8)
def _beam_dirs(num_lasers: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(num_lasers) / num_lasers
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def cast_lasers(state: WorldState, u: int) -> np.ndarray:
    """Distances from the UAV center to the nearest obstacle surface or wall
    along each beam, capped at the field-of-view range."""
    cfg = state.config
    pos = state.uavs[u].pos
    dirs = _beam_dirs(cfg.num_lasers)
    cap = cfg.fov
    readings = np.full(cfg.num_lasers, cap)

    # Walls of the [0,W]x[0,H] arena: smallest positive ray parameter.
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dirs[:, 0] > 0, (cfg.area_width - pos[0]) / dirs[:, 0],
                      np.where(dirs[:, 0] < 0, -pos[0] / dirs[:, 0], np.inf))
        ty = np.where(dirs[:, 1] > 0, (cfg.area_height - pos[1]) / dirs[:, 1],
                      np.where(dirs[:, 1] < 0, -pos[1] / dirs[:, 1], np.inf))
    t_wall = np.minimum(np.where(tx > 0, tx, np.inf), np.where(ty > 0, ty, np.inf))
    readings = np.minimum(readings, t_wall)

    if len(state.obstacle_r) > 0:
        rel = state.obstacle_xy - pos[None, :]                     # (B,2)
        b = dirs @ rel.T                                           # (K,B)
        c2 = np.sum(rel ** 2, axis=1)[None, :] - state.obstacle_r[None, :] ** 2
        disc = b * b - c2
        hit = disc >= 0.0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t_near = b - sq
        t_far = b + sq
        t_obs = np.where(hit & (t_near > 0), t_near,
                         np.where(hit & (t_far > 0), t_far, np.inf))
        readings = np.minimum(readings, t_obs.min(axis=1))

    return np.minimum(readings, cap)


def _collect_from_poi(state: WorldState, p: int, rate: float) -> float:
    """Take up to rate from PoI p; the returned amount is the exact float
    decrement applied to poi_rem[p]."""
    m_old = float(state.poi_rem[p])
    if m_old <= rate:
        state.poi_rem[p] = 0.0
        return m_old
    m_new = m_old - rate
    state.poi_rem[p] = m_new
    return m_old - m_new


def step(state: WorldState, actions) -> tuple[WorldState, StepEvents]:
    """Advance the world one timestep in place; returns (state, events)."""
    if state.done:
        raise ContractError("step() called on a finished episode")
    cfg = state.config
    n = len(state.uavs)
    if len(actions) != n:
        raise ContractError(f"expected {n} actions, got {len(actions)}")

    # 1. motion
    dist_moved = np.zeros(n)
    for i, uav in enumerate(state.uavs):
        new_pos = apply_action(uav.pos, clamp_action(actions[i]), cfg.step_length)
        uav.velocity = new_pos - uav.pos
        dist_moved[i] = float(np.linalg.norm(uav.velocity))
        uav.pos = new_pos

    # 2. collisions with obstacles or enclosure walls
    collided = np.zeros(n, dtype=bool)
    r = cfg.uav_radius
    for i, uav in enumerate(state.uavs):
        x, y = uav.pos
        if x < r or x > cfg.area_width - r or y < r or y > cfg.area_height - r:
            collided[i] = True
        elif len(state.obstacle_r) > 0:
            d = np.linalg.norm(state.obstacle_xy - uav.pos, axis=1)
            if np.any(d < state.obstacle_r + r):
                collided[i] = True
        if collided[i]:
            uav.alive = False
    if collided.any():
        state.done = True
        state.done_reason = CAUSE_COLLISION

    min_laser = np.array([float(cast_lasers(state, i).min()) for i in range(n)])

    # 3. MUAV data collection, sequential in MUAV index order
    m_count = state.num_muavs
    collected = np.zeros(m_count)
    breakdown: list[tuple[int, int, float]] = []
    discovered: list[np.ndarray] = []
    for m in range(m_count):
        uav = state.uavs[m]
        dists = np.linalg.norm(state.poi_xy - uav.pos, axis=1)
        in_range = dists <= cfg.sense_radius
        live = state.poi_rem > 0.0
        new = in_range & live & ~state.seen_pois[m]
        discovered.append(np.nonzero(new)[0])
        state.seen_pois[m] |= in_range
        for p in np.nonzero(in_range & live)[0]:
            take = _collect_from_poi(state, int(p), cfg.collect_rate)
            breakdown.append((m, int(p), take))
            collected[m] += take

    # 4. CUAV charging: closest in-range MUAV, one target per CUAV
    charge: list[ChargeOutcome] = []
    e0 = cfg.charge_per_step
    for c in range(state.num_muavs, n):
        cuav = state.uavs[c]
        muavs = state.muavs()
        ers = np.array([u.er for u in muavs]) if muavs else np.zeros(0)
        er_mean = float(ers.mean()) if len(ers) else 0.0
        dists = np.array([float(np.linalg.norm(u.pos - cuav.pos)) for u in muavs])
        candidates = np.nonzero(dists <= cfg.charge_radius)[0] if len(dists) else np.zeros(0, int)
        if len(candidates) == 0:
            charge.append(ChargeOutcome(None, 0.0, 0.0, 0.0, False, er_mean))
            continue
        target = int(min(candidates, key=lambda i: (dists[i], i)))
        tu = muavs[target]
        target_er = tu.er
        headroom = tu.ed - tu.ec          # == er0 - er, but exact by construction
        if headroom <= e0:
            delivered = tu.ed - tu.ec
            tu.ec = tu.ed                 # exact top-up keeps ec <= ed bitwise
        else:
            delivered = e0
            tu.ec = tu.ec + e0
        charge.append(ChargeOutcome(target, delivered, e0 - delivered,
                                    target_er, headroom <= 0.0, er_mean))

    # 5. MUAV energy accounting; depletion terminates
    for m in range(m_count):
        uav = state.uavs[m]
        cost = cfg.beta * collected[m] + cfg.kappa * dist_moved[m]
        uav.ed = uav.ed + cost
        if uav.er <= 0.0:
            uav.alive = False
            if not state.done:
                state.done = True
                state.done_reason = CAUSE_ENERGY

    # 6. clock
    state.t += 1
    if state.t >= cfg.max_steps and not state.done:
        state.done = True
        state.done_reason = CAUSE_MAX_STEPS

    events = StepEvents(
        collected=collected,
        collection_breakdown=breakdown,
        dist_moved=dist_moved,
        charge=charge,
        collided=collided,
        min_laser=min_laser,
        discovered=discovered,
        terminated=state.done,
        cause=state.done_reason,
    )
    return state, events


# ---------------------------------------------------------------------------
# observations

def muav_obs_len(config: WorldConfig) -> int:
    return config.num_lasers + 4 * NUM_UAV_BLOCKS + 3 * NUM_POI_BLOCKS + 2 + 2 + 1 + 3 + 2


def cuav_obs_len(config: WorldConfig) -> int:
    return config.num_lasers + 4 * NUM_UAV_BLOCKS + 5 * config.num_muavs + 2 + 2 + 1 + 2


def obs_len(kind: str, config: WorldConfig) -> int:
    return muav_obs_len(config) if kind == MUAV else cuav_obs_len(config)


def max_obs_len(config: WorldConfig) -> int:
    lens = []
    if config.num_muavs > 0:
        lens.append(muav_obs_len(config))
    if config.num_cuavs > 0:
        lens.append(cuav_obs_len(config))
    return max(lens)


def _nearest_uav_blocks(state: WorldState, u: int) -> list[float]:
    """The two nearest other UAVs as (unit dx, unit dy, distance, type flag);
    absent slots pad with distance = field-of-view range."""
    cfg = state.config
    me = state.uavs[u]
    others = [(float(np.linalg.norm(o.pos - me.pos)), i)
              for i, o in enumerate(state.uavs) if i != u]
    others.sort()
    out: list[float] = []
    for k in range(NUM_UAV_BLOCKS):
        if k < len(others):
            d, i = others[k]
            o = state.uavs[i]
            if d > 0:
                ux, uy = (o.pos - me.pos) / d
            else:
                ux, uy = 0.0, 0.0
            flag = 0.0 if o.kind == MUAV else 1.0
            out += [float(ux), float(uy), d, flag]
        else:
            out += [0.0, 0.0, cfg.fov, 0.0]
    return out


def _self_block(state: WorldState, u: int) -> list[float]:
    cfg = state.config
    uav = state.uavs[u]
    return [
        float(uav.velocity[0]), float(uav.velocity[1]),
        float(uav.pos[0]) / cfg.area_width, float(uav.pos[1]) / cfg.area_height,
        state.t / cfg.max_steps,
    ]


def observe(state: WorldState, u: int) -> np.ndarray:
    """Assemble the fixed-layout partial observation for UAV u."""
    cfg = state.config
    uav = state.uavs[u]
    parts: list[float] = list(cast_lasers(state, u))
    parts += _nearest_uav_blocks(state, u)

    if uav.kind == MUAV:
        dists = np.linalg.norm(state.poi_xy - uav.pos, axis=1)
        visible = np.nonzero((state.poi_rem > 0.0) & (dists <= cfg.fov))[0]
        order = sorted(visible, key=lambda p: (dists[p], p))[:NUM_POI_BLOCKS]
        for p in order:
            d = dists[p]
            if d > 0:
                ux, uy = (state.poi_xy[p] - uav.pos) / d
            else:
                ux, uy = 0.0, 0.0
            parts += [float(ux), float(uy), float(state.poi_rem[p])]
        parts += [0.0, 0.0, 0.0] * (NUM_POI_BLOCKS - len(order))
        parts += _self_block(state, u)
        parts += [uav.er / uav.er0, uav.ec / cfg.e_max, uav.ed / uav.er0]
        parts += [1.0, 0.0]
    else:
        for m in range(state.num_muavs):
            mu = state.uavs[m]
            d = float(np.linalg.norm(mu.pos - uav.pos))
            if d > 0:
                ux, uy = (mu.pos - uav.pos) / d
            else:
                ux, uy = 0.0, 0.0
            parts += [mu.er / mu.er0, mu.ec / cfg.e_max, float(ux), float(uy), d]
        parts += _self_block(state, u)
        parts += [0.0, 1.0]

    vec = np.asarray(parts, dtype=float)
    assert len(vec) == obs_len(uav.kind, cfg)
    return vec


# ---------------------------------------------------------------------------
# trajectory export

TRAJ_COLUMNS = ["t", "uav_id", "kind", "x", "y", "Er", "Ec", "Ed",
                "collected", "charged_to", "reward"]


def _fmt(value) -> str:
    if isinstance(value, float) or isinstance(value, np.floating):
        return repr(float(value))
    return str(value)


def write_trajectory_csv(path, rows) -> None:
    """rows: iterables matching TRAJ_COLUMNS; floats are written via repr for
    byte-stable output."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJ_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_poi_csv(path, state: WorldState) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["poi_id", "x", "y", "m0", "m_final"])
        for p in range(len(state.poi_m0)):
            writer.writerow([p, _fmt(float(state.poi_xy[p, 0])),
                             _fmt(float(state.poi_xy[p, 1])),
                             _fmt(float(state.poi_m0[p])),
                             _fmt(float(state.poi_rem[p]))])
