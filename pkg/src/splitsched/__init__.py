"""Split-window job scheduling: simulator, RL environment, PPO agent and baselines."""

__version__ = "0.1.0"
