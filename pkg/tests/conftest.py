import numpy as np
import pytest

from hgam.world import CUAV, MUAV, UavState, WorldConfig, WorldState


def build_state(config: WorldConfig, uav_pos, poi_pos=(), poi_m0=(),
                obstacles=()) -> WorldState:
    """Hand-placed world: uav_pos must list MUAV positions first (matching
    config counts); obstacles are (x, y, radius) triples."""
    kinds = [MUAV] * config.num_muavs + [CUAV] * config.num_cuavs
    assert len(uav_pos) == len(kinds)
    uavs = [UavState(kind=k, pos=np.asarray(p, dtype=float),
                     velocity=np.zeros(2), er0=config.initial_energy)
            for k, p in zip(kinds, uav_pos)]
    poi_xy = np.asarray(poi_pos, dtype=float).reshape(-1, 2)
    m0 = np.asarray(poi_m0, dtype=float).reshape(-1)
    obs = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    return WorldState(
        config=config,
        uavs=uavs,
        poi_xy=poi_xy,
        poi_m0=m0,
        poi_rem=m0.copy(),
        obstacle_xy=obs[:, :2].copy(),
        obstacle_r=obs[:, 2].copy(),
        seen_pois=[np.zeros(len(m0), dtype=bool) for _ in range(config.num_muavs)],
    )


@pytest.fixture
def mini_config():
    """The miniature world used by the learning and baseline checks."""
    return WorldConfig(area_width=8.0, area_height=8.0, num_muavs=1,
                       num_cuavs=1, num_pois=20, max_steps=200)
