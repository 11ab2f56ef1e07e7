"""World model: configuration, domain state, scenario generation, shared geometry.

Positions are 2D; the nominal 16x16x3 workspace is flattened to a plane
because UAVs fly at separated altitudes (no UAV/UAV collisions) while
obstacles span all altitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .errors import ConfigError, InfeasibleScenarioError

MUAV = "muav"
CUAV = "cuav"

# Obstacle radii are drawn uniformly from this range (length-units).
OBSTACLE_RADIUS_RANGE = (0.4, 0.8)
# Rejection-sampling budget for obstacle placement.
PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class WorldConfig:
    """Flat scenario + reward configuration; field names match the config file keys."""

    area_width: float = 16.0
    area_height: float = 16.0
    num_muavs: int = 2
    num_cuavs: int = 1
    num_pois: int = 100
    num_obstacles: int = 6
    sense_radius: float = 1.0
    charge_radius: float = 1.5
    view_range: float = 4.0
    uav_radius: float = 0.2
    poi_radius: float = 0.1
    step_length: float = 0.13
    collect_rate: float = 0.2
    max_steps: int = 700
    initial_energy: float = 50.0      # Er0
    charge_per_step: float = 0.5      # e0, energy quantum per charging step
    e_max: float = 50.0               # normalisation cap for charged energy
    beta: float = 1.0                 # energy per unit data collected
    kappa: float = 1.0                # energy per unit distance travelled
    num_lasers: int = 16
    laser_warn_dist: float = 0.5
    low_battery_frac: float = 0.2
    # reward weights
    w_c: float = 0.5
    w_l: float = 0.02
    w_e: float = 1.6
    w_f: float = 0.5
    w_d: float = 0.1
    discovery_bonus: float = 0.1
    rotation_penalty: float = 0.5
    plow: float = 2.0
    collision_penalty: float = 100.0
    laser_penalty: float = 2.0
    # ablation switches
    global_view: bool = False         # widen the field of view to the arena diagonal
    comm_radius: float | None = None  # optional cap on graph-neighbor eligibility

    @property
    def num_uavs(self) -> int:
        return self.num_muavs + self.num_cuavs

    @property
    def fov(self) -> float:
        """Effective field-of-view range; the arena diagonal under global_view."""
        if self.global_view:
            return math.hypot(self.area_width, self.area_height)
        return self.view_range

    def validate(self) -> "WorldConfig":
        positive = [
            "area_width", "area_height", "sense_radius", "charge_radius",
            "view_range", "uav_radius", "poi_radius", "step_length",
            "initial_energy", "e_max",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.view_range < self.sense_radius:
            raise ConfigError("view_range must be >= sense_radius")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if not 0.0 <= self.w_f <= 1.0:
            raise ConfigError("w_f must lie in [0, 1]")
        if not 0.0 <= self.low_battery_frac <= 1.0:
            raise ConfigError("low_battery_frac must lie in [0, 1]")
        for name in ("num_muavs", "num_cuavs", "num_pois", "num_obstacles", "num_lasers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.num_lasers < 1:
            raise ConfigError("num_lasers must be >= 1")
        if self.comm_radius is not None and self.comm_radius <= 0:
            raise ConfigError("comm_radius must be > 0 when set")
        return self


@dataclass
class UavState:
    """One UAV. Energy is tracked via the charged/consumed accumulators; the
    remaining level is always derived as er0 + ec - ed so the bookkeeping
    identity holds exactly (no float drift between three counters)."""

    kind: str                 # MUAV or CUAV
    pos: np.ndarray           # (2,)
    velocity: np.ndarray      # (2,) displacement of the last step
    er0: float
    ec: float = 0.0           # cumulative energy received
    ed: float = 0.0           # cumulative energy consumed
    alive: bool = True

    @property
    def er(self) -> float:
        return self.er0 + self.ec - self.ed

    def copy(self) -> "UavState":
        return UavState(self.kind, self.pos.copy(), self.velocity.copy(),
                        self.er0, self.ec, self.ed, self.alive)


@dataclass
class WorldState:
    """Full simulator state. PoIs and obstacles are stored as arrays
    (positions, initial/remaining data, radii) rather than object lists."""

    config: WorldConfig
    uavs: list[UavState]
    poi_xy: np.ndarray        # (P, 2)
    poi_m0: np.ndarray        # (P,)
    poi_rem: np.ndarray       # (P,)
    obstacle_xy: np.ndarray   # (B, 2)
    obstacle_r: np.ndarray    # (B,)
    t: int = 0
    done: bool = False
    done_reason: str | None = None
    # per-MUAV mask of PoIs that have ever been inside its sensing radius
    seen_pois: list[np.ndarray] = field(default_factory=list)

    @property
    def num_muavs(self) -> int:
        return self.config.num_muavs

    @property
    def num_cuavs(self) -> int:
        return self.config.num_cuavs

    def muavs(self) -> list[UavState]:
        return self.uavs[: self.num_muavs]

    def cuavs(self) -> list[UavState]:
        return self.uavs[self.num_muavs:]

    def copy(self) -> "WorldState":
        return WorldState(
            config=self.config,
            uavs=[u.copy() for u in self.uavs],
            poi_xy=self.poi_xy.copy(),
            poi_m0=self.poi_m0.copy(),
            poi_rem=self.poi_rem.copy(),
            obstacle_xy=self.obstacle_xy.copy(),
            obstacle_r=self.obstacle_r.copy(),
            t=self.t,
            done=self.done,
            done_reason=self.done_reason,
            seen_pois=[m.copy() for m in self.seen_pois],
        )


def generate_scenario(config: WorldConfig, seed: int) -> WorldState:
    """Build a fresh episode state. Pure function of (config, seed).

    Draw order is fixed: PoI positions, PoI data volumes, UAV positions,
    then obstacles (rejection-sampled so none overlaps a UAV start disk).
    """
    config.validate()
    rng = np.random.default_rng(seed)
    w, h = config.area_width, config.area_height

    poi_xy = rng.uniform((0.0, 0.0), (w, h), size=(config.num_pois, 2))
    poi_m0 = rng.uniform(0.0, 1.0, size=config.num_pois)

    r = config.uav_radius
    uavs = []
    kinds = [MUAV] * config.num_muavs + [CUAV] * config.num_cuavs
    for kind in kinds:
        pos = rng.uniform((r, r), (w - r, h - r), size=2)
        uavs.append(UavState(kind=kind, pos=pos, velocity=np.zeros(2),
                             er0=config.initial_energy))

    lo, hi = OBSTACLE_RADIUS_RANGE
    obs_xy = np.zeros((config.num_obstacles, 2))
    obs_r = np.zeros(config.num_obstacles)
    for i in range(config.num_obstacles):
        for attempt in range(PLACEMENT_ATTEMPTS):
            rad = rng.uniform(lo, hi)
            if rad >= w / 2 or rad >= h / 2:
                continue
            center = rng.uniform((rad, rad), (w - rad, h - rad), size=2)
            clear = all(np.linalg.norm(center - u.pos) >= rad + config.uav_radius
                        for u in uavs)
            if clear:
                obs_xy[i] = center
                obs_r[i] = rad
                break
        else:
            raise InfeasibleScenarioError(
                f"could not place obstacle {i} after {PLACEMENT_ATTEMPTS} attempts")

    return WorldState(
        config=config,
        uavs=uavs,
        poi_xy=poi_xy,
        poi_m0=poi_m0,
        poi_rem=poi_m0.copy(),
        obstacle_xy=obs_xy,
        obstacle_r=obs_r,
        seen_pois=[np.zeros(config.num_pois, dtype=bool) for _ in range(config.num_muavs)],
    )


def circle_overlap_area(c1: np.ndarray, c2: np.ndarray, r: float) -> float:
    """Intersection area of two equal-radius disks (closed-form lens formula)."""
    d = float(np.linalg.norm(np.asarray(c1, dtype=float) - np.asarray(c2, dtype=float)))
    if d >= 2.0 * r:
        return 0.0
    return 2.0 * r * r * math.acos(d / (2.0 * r)) - 0.5 * d * math.sqrt(4.0 * r * r - d * d)


def _load_flat_mapping(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat key/value mapping")
    return data


def _config_from_mapping(cls, data: dict, source: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_world_config(path) -> WorldConfig:
    """Read a WorldConfig from a flat yaml file; unknown keys are fatal,
    missing keys fall back to the defaults."""
    cfg = _config_from_mapping(WorldConfig, _load_flat_mapping(path), str(path))
    return cfg.validate()
