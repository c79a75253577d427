"""Preference-guided hierarchical RL with a distance-constrained subgoal curriculum."""

from .config import TrainConfig, load_config
from .envs import make_env

__all__ = ["TrainConfig", "load_config", "make_env"]
__version__ = "0.1.0"
