"""Seedable O-RAN eMBB/URLLC resource-allocation simulator with PPO and meta-learning schedulers."""
from .config import ScenarioConfig, load_config
from .env import ORanEnv, run_episode

__all__ = ["ScenarioConfig", "load_config", "ORanEnv", "run_episode"]
__version__ = "0.1.0"
