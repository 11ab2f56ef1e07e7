"""Multi-UAV data-collection and in-flight charging lab: simulator,
heterogeneous graph-attention actor-critic, and evaluation harness."""

from .world import WorldConfig, WorldState, generate_scenario
from .training import TrainConfig, train
from .harness import evaluate, make_policy

__all__ = [
    "WorldConfig", "WorldState", "generate_scenario",
    "TrainConfig", "train", "evaluate", "make_policy",
]

__version__ = "0.1.0"
